//! The tagcache daemon: a single non-blocking network thread in front of an
//! optional pool of worker threads.

mod config;
mod execute;
mod server;

pub use config::{ServerConfig, DEFAULT_MAX_CONNECTIONS, DEFAULT_PORT, DEFAULT_QUEUE_DEPTH, DEFAULT_SOCKET_PATH};
pub use execute::Engine;
pub use server::{RunningServer, Server, ServerError, ServerHandle};
