use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key is empty")]
    Empty,
    #[error("key is {0} bytes, limit is 65535")]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("a record carries at most 255 tags")]
    TooMany,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("bucket count {0} is not a nonzero power of two")]
    BucketCount(usize),
    #[error("bucket limit of {0} bytes cannot hold even an empty record")]
    BucketLimit(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("record of {size} bytes exceeds the per-bucket limit of {limit} bytes")]
    TooLarge { size: u64, limit: u64 },
}
