use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use tagcache_core::wire::DEFAULT_MAX_BODY;
use tagcache_core::StoreConfig;

pub const DEFAULT_PORT: u16 = 9180;
pub const DEFAULT_SOCKET_PATH: &str = "/tmp/tagcache.sock";
pub const DEFAULT_QUEUE_DEPTH: usize = 1024;
pub const DEFAULT_MAX_CONNECTIONS: usize = 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Worker threads; 0 executes every request on the network thread.
    pub workers: usize,
    pub queue_depth: usize,
    pub tcp: Option<SocketAddr>,
    pub socket: Option<PathBuf>,
    pub store: StoreConfig,
    pub max_connections: usize,
    pub max_body: u32,
    /// Artificial per-request delay in workers, for saturating the queue in tests.
    #[doc(hidden)]
    pub worker_delay: Option<Duration>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            workers: 4,
            queue_depth: DEFAULT_QUEUE_DEPTH,
            tcp: Some(SocketAddr::from((Ipv4Addr::LOCALHOST, DEFAULT_PORT))),
            socket: Some(PathBuf::from(DEFAULT_SOCKET_PATH)),
            store: StoreConfig::default(),
            max_connections: DEFAULT_MAX_CONNECTIONS,
            max_body: DEFAULT_MAX_BODY,
            worker_delay: None,
        }
    }
}

impl ServerConfig {
    /// A configuration listening only on an ephemeral loopback TCP port.
    pub fn loopback(workers: usize) -> ServerConfig {
        ServerConfig {
            workers,
            tcp: Some(SocketAddr::from((Ipv4Addr::LOCALHOST, 0))),
            socket: None,
            ..ServerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.store.validate().map_err(|e| e.to_string())?;
        if self.tcp.is_none() && self.socket.is_none() {
            return Err("no listen endpoint configured".into());
        }
        if self.workers > 0 && self.queue_depth == 0 {
            return Err("queue depth must be at least 1".into());
        }
        if self.max_connections == 0 {
            return Err("max connections must be at least 1".into());
        }
        Ok(())
    }
}
