//! Core of the tagcache daemon: a bucketed key-value store with typed
//! numeric tags, its secondary tag index, and the binary wire protocol.

pub mod error;
pub mod lock;
pub mod rbtree;
pub mod store;
pub mod tagindex;
pub mod types;
pub mod wire;

pub use error::{ConfigError, KeyError, StoreError, TagError};
pub use store::{bucket_of, fnv1a64, DeleteOutcome, PutOutcome, Store, StoreConfig, StoreStats};
pub use tagindex::TagIndex;
pub use types::{CmpOp, Key, Tag, TagSet};
