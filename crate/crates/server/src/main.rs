use std::net::{SocketAddr, ToSocketAddrs};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use signal_hook::consts::{SIGINT, SIGTERM};
use tagcache_core::store::{DEFAULT_BUCKET_COUNT, DEFAULT_BUCKET_LIMIT, RECORD_OVERHEAD};
use tagcache_core::wire::DEFAULT_MAX_BODY;
use tagcache_core::StoreConfig;
use tagcache_server::{
    Server, ServerConfig, ServerError, DEFAULT_MAX_CONNECTIONS, DEFAULT_QUEUE_DEPTH,
    DEFAULT_SOCKET_PATH,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_BIND: u8 = 2;

/// In-memory tagged key-value cache daemon.
#[derive(Debug, Parser)]
#[command(name = "tagcached", version)]
struct Args {
    /// Worker threads; 0 runs threadless with requests executed on the network thread.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Hash buckets; must be a power of two.
    #[arg(long, default_value_t = DEFAULT_BUCKET_COUNT)]
    buckets: usize,
    /// Memory budget per bucket in bytes.
    #[arg(long, default_value_t = DEFAULT_BUCKET_LIMIT)]
    bucket_limit: u64,
    /// TCP listen address.
    #[arg(long, default_value = "127.0.0.1:9180")]
    tcp: String,
    /// Local stream socket path.
    #[arg(long, default_value = DEFAULT_SOCKET_PATH)]
    socket: PathBuf,
    /// Do not listen on TCP.
    #[arg(long)]
    no_tcp: bool,
    /// Do not listen on the local socket.
    #[arg(long)]
    no_socket: bool,
    /// Job queue capacity; requests beyond it are answered SERVER_BUSY.
    #[arg(long, default_value_t = DEFAULT_QUEUE_DEPTH)]
    queue_depth: usize,
    /// Largest accepted request body in bytes.
    #[arg(long, default_value_t = DEFAULT_MAX_BODY)]
    max_body: u32,
    /// Concurrent connection limit.
    #[arg(long, default_value_t = DEFAULT_MAX_CONNECTIONS)]
    max_connections: usize,
    /// Count lock acquisitions and handoffs and report them through STATS.
    #[arg(long)]
    instrument: bool,
}

fn resolve(addr: &str) -> Result<SocketAddr, String> {
    addr.to_socket_addrs()
        .map_err(|e| format!("bad --tcp address {addr:?}: {e}"))?
        .next()
        .ok_or_else(|| format!("--tcp address {addr:?} resolves to nothing"))
}

fn config_from(args: Args) -> Result<ServerConfig, String> {
    Ok(ServerConfig {
        workers: args.workers,
        queue_depth: args.queue_depth,
        tcp: if args.no_tcp { None } else { Some(resolve(&args.tcp)?) },
        socket: (!args.no_socket).then_some(args.socket),
        store: StoreConfig {
            bucket_count: args.buckets,
            bucket_limit_bytes: args.bucket_limit,
            record_overhead_bytes: RECORD_OVERHEAD,
            instrument: args.instrument,
        },
        max_connections: args.max_connections,
        max_body: args.max_body,
        worker_delay: None,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match config_from(args) {
        Ok(c) => c,
        Err(msg) => {
            error!("{msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let server = match Server::bind(config) {
        Ok(s) => s,
        Err(e @ ServerError::Config(_)) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_BIND);
        }
    };
    let flag = server.handle().flag();
    for sig in [SIGINT, SIGTERM] {
        if let Err(e) = signal_hook::flag::register(sig, flag.clone()) {
            error!("cannot install signal handler: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    if let Some(addr) = server.tcp_addr() {
        log::info!("listening on tcp {addr}");
    }
    if let Some(path) = server.socket_path() {
        log::info!("listening on {}", path.display());
    }
    match server.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
