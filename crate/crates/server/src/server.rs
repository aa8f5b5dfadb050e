//! The network front-end.
//!
//! One thread owns every socket. It reads with non-blocking IO, cuts the
//! byte stream into frames, and either hands each request to the worker
//! pool through a bounded queue or, with zero workers, executes it inline.
//! Workers return encoded responses over a completion channel; only the
//! network thread writes to sockets, in per-connection request order.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::os::unix::net::UnixStream as StdUnixStream;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender, TrySendError};
use log::{debug, info, warn};
use mio::event::Source;
use mio::net::{TcpListener, TcpStream, UnixListener, UnixStream};
use mio::{Events, Interest, Poll, Registry, Token, Waker};
use tagcache_core::wire::{self, Command, Decoded, RequestFrame, ResponseFrame, Status};
use tagcache_core::Store;
use thiserror::Error;

use crate::config::ServerConfig;
use crate::execute::Engine;

const TCP_LISTENER: Token = Token(0);
const UNIX_LISTENER: Token = Token(1);
const WAKER: Token = Token(2);
const FIRST_CONNECTION: usize = 3;

const READ_CHUNK: usize = 64 * 1024;
const POLL_INTERVAL: Duration = Duration::from_millis(100);
const DRAIN_DEADLINE: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot listen on {what}: {source}")]
    Bind {
        what: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Job {
    conn: usize,
    seq: u64,
    frame: RequestFrame,
}

struct Completion {
    conn: usize,
    seq: u64,
    bytes: Vec<u8>,
}

enum Stream {
    Tcp(TcpStream),
    Unix(UnixStream),
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Source for Stream {
    fn register(&mut self, registry: &Registry, token: Token, interests: Interest) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.register(registry, token, interests),
            Stream::Unix(s) => s.register(registry, token, interests),
        }
    }

    fn reregister(&mut self, registry: &Registry, token: Token, interests: Interest) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.reregister(registry, token, interests),
            Stream::Unix(s) => s.reregister(registry, token, interests),
        }
    }

    fn deregister(&mut self, registry: &Registry) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.deregister(registry),
            Stream::Unix(s) => s.deregister(registry),
        }
    }
}

/// Routes decoded requests to the worker queue or executes them inline.
struct Dispatcher {
    engine: Arc<Engine>,
    jobs: Option<Sender<Job>>,
    max_body: u32,
}

impl Dispatcher {
    /// Returns the encoded response when it is available immediately.
    fn dispatch(&self, conn: usize, seq: u64, frame: RequestFrame) -> Option<Vec<u8>> {
        let Some(jobs) = &self.jobs else {
            return Some(encode(&self.engine.execute(&frame)));
        };
        let id = frame.request_id;
        match jobs.try_send(Job { conn, seq, frame }) {
            Ok(()) => {
                self.engine.record_handoff();
                None
            }
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                Some(encode(&ResponseFrame::status(id, Status::ServerBusy)))
            }
        }
    }
}

fn encode(resp: &ResponseFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(wire::HEADER_LEN + resp.body.len());
    wire::encode_response_into(resp, &mut out).expect("server responses always encode");
    out
}

struct Connection {
    stream: Stream,
    input: Vec<u8>,
    consumed: usize,
    output: Vec<u8>,
    written: usize,
    next_seq: u64,
    next_write: u64,
    pending: BTreeMap<u64, Vec<u8>>,
    in_flight: usize,
    /// No further requests are read: peer EOF, QUIT, protocol error or shutdown.
    reads_closed: bool,
    failed: bool,
}

impl Connection {
    fn new(stream: Stream) -> Connection {
        Connection {
            stream,
            input: Vec::new(),
            consumed: 0,
            output: Vec::new(),
            written: 0,
            next_seq: 0,
            next_write: 0,
            pending: BTreeMap::new(),
            in_flight: 0,
            reads_closed: false,
            failed: false,
        }
    }

    fn read_available(&mut self) {
        let mut chunk = [0u8; READ_CHUNK];
        loop {
            match self.stream.read(&mut chunk) {
                Ok(0) => {
                    self.reads_closed = true;
                    return;
                }
                Ok(n) => self.input.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    debug!("read error: {e}");
                    self.failed = true;
                    return;
                }
            }
        }
    }

    fn process_input(&mut self, conn: usize, dispatcher: &Dispatcher) {
        while !self.reads_closed {
            let frame = match wire::decode_request(&self.input[self.consumed..], dispatcher.max_body) {
                Ok(Decoded::Frame(frame, used)) => {
                    self.consumed += used;
                    frame
                }
                Ok(Decoded::NeedMore(_)) => break,
                Err(e) => {
                    debug!("connection {conn}: {e}; closing");
                    self.reads_closed = true;
                    break;
                }
            };
            let seq = self.next_seq;
            self.next_seq += 1;
            if frame.command == Command::Quit {
                self.reads_closed = true;
                self.complete(seq, encode(&ResponseFrame::status(frame.request_id, Status::Ok)));
                break;
            }
            match dispatcher.dispatch(conn, seq, frame) {
                Some(bytes) => self.complete(seq, bytes),
                None => self.in_flight += 1,
            }
        }
        if self.consumed > 0 && (self.consumed == self.input.len() || self.consumed > READ_CHUNK) {
            self.input.drain(..self.consumed);
            self.consumed = 0;
        }
    }

    fn complete(&mut self, seq: u64, bytes: Vec<u8>) {
        if seq == self.next_write {
            self.output.extend_from_slice(&bytes);
            self.next_write += 1;
            while let Some(next) = self.pending.remove(&self.next_write) {
                self.output.extend_from_slice(&next);
                self.next_write += 1;
            }
        } else {
            self.pending.insert(seq, bytes);
        }
    }

    fn flush(&mut self) {
        while self.written < self.output.len() {
            match self.stream.write(&self.output[self.written..]) {
                Ok(0) => {
                    self.failed = true;
                    return;
                }
                Ok(n) => self.written += n,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    debug!("write error: {e}");
                    self.failed = true;
                    return;
                }
            }
        }
        self.output.clear();
        self.written = 0;
    }

    fn finished(&self) -> bool {
        self.failed
            || (self.reads_closed
                && self.in_flight == 0
                && self.pending.is_empty()
                && self.output.is_empty())
    }
}

/// Stops a running server from any thread.
#[derive(Clone)]
pub struct ServerHandle {
    shutdown: Arc<AtomicBool>,
    waker: Arc<Waker>,
}

impl ServerHandle {
    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = self.waker.wake();
    }

    /// The flag checked by the event loop; signal handlers may set it directly.
    pub fn flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shutdown)
    }
}

pub struct Server {
    config: ServerConfig,
    poll: Poll,
    tcp: Option<TcpListener>,
    unix: Option<(UnixListener, PathBuf)>,
    engine: Arc<Engine>,
    handle: ServerHandle,
}

fn bind_unix(path: &Path) -> Result<UnixListener, ServerError> {
    let bind_err = |source| ServerError::Bind {
        what: path.display().to_string(),
        source,
    };
    if path.exists() {
        // A live daemon still answers on the path; a stale file does not.
        if StdUnixStream::connect(path).is_ok() {
            return Err(bind_err(io::Error::new(
                io::ErrorKind::AddrInUse,
                "another server is listening",
            )));
        }
        std::fs::remove_file(path).map_err(bind_err)?;
    }
    UnixListener::bind(path).map_err(bind_err)
}

impl Server {
    /// Validates the configuration, creates the store and binds every
    /// listener. Nothing is served until [`Server::run`].
    pub fn bind(config: ServerConfig) -> Result<Server, ServerError> {
        config.validate().map_err(ServerError::Config)?;
        let store = Store::new(config.store.clone()).map_err(|e| ServerError::Config(e.to_string()))?;
        let poll = Poll::new()?;
        let waker = Arc::new(Waker::new(poll.registry(), WAKER)?);

        let tcp = match config.tcp {
            Some(addr) => {
                let mut l = TcpListener::bind(addr).map_err(|source| ServerError::Bind {
                    what: addr.to_string(),
                    source,
                })?;
                poll.registry().register(&mut l, TCP_LISTENER, Interest::READABLE)?;
                Some(l)
            }
            None => None,
        };
        let unix = match &config.socket {
            Some(path) => {
                let mut l = bind_unix(path)?;
                poll.registry().register(&mut l, UNIX_LISTENER, Interest::READABLE)?;
                Some((l, path.clone()))
            }
            None => None,
        };

        Ok(Server {
            config,
            poll,
            tcp,
            unix,
            engine: Arc::new(Engine::new(store)),
            handle: ServerHandle {
                shutdown: Arc::new(AtomicBool::new(false)),
                waker,
            },
        })
    }

    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.tcp.as_ref().and_then(|l| l.local_addr().ok())
    }

    pub fn socket_path(&self) -> Option<&Path> {
        self.unix.as_ref().map(|(_, p)| p.as_path())
    }

    pub fn handle(&self) -> ServerHandle {
        self.handle.clone()
    }

    pub fn engine(&self) -> Arc<Engine> {
        Arc::clone(&self.engine)
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> RunningServer {
        let handle = self.handle();
        let engine = self.engine();
        let tcp_addr = self.tcp_addr();
        let socket_path = self.socket_path().map(Path::to_path_buf);
        let thread = thread::Builder::new()
            .name("tagcache-net".into())
            .spawn(move || self.run())
            .expect("spawn network thread");
        RunningServer {
            handle,
            engine,
            tcp_addr,
            socket_path,
            thread: Some(thread),
        }
    }

    /// Serves until [`ServerHandle::shutdown`] is called, then drains
    /// in-flight requests and flushes every connection before returning.
    pub fn run(mut self) -> Result<(), ServerError> {
        let (completion_tx, completions) = crossbeam_channel::unbounded::<Completion>();
        let wake_pending = Arc::new(AtomicBool::new(false));

        let mut workers = Vec::new();
        let jobs = if self.config.workers > 0 {
            let (tx, rx) = crossbeam_channel::bounded::<Job>(self.config.queue_depth);
            for i in 0..self.config.workers {
                let ctx = WorkerContext {
                    jobs: rx.clone(),
                    completions: completion_tx.clone(),
                    engine: Arc::clone(&self.engine),
                    waker: Arc::clone(&self.handle.waker),
                    wake_pending: Arc::clone(&wake_pending),
                    delay: self.config.worker_delay,
                };
                workers.push(
                    thread::Builder::new()
                        .name(format!("tagcache-worker-{i}"))
                        .spawn(move || ctx.run())?,
                );
            }
            Some(tx)
        } else {
            None
        };
        drop(completion_tx);

        let dispatcher = Dispatcher {
            engine: Arc::clone(&self.engine),
            jobs,
            max_body: self.config.max_body,
        };
        info!(
            "serving with {} worker(s){}",
            self.config.workers,
            if self.config.workers == 0 { " (threadless)" } else { "" }
        );

        let mut conns: HashMap<usize, Connection> = HashMap::new();
        let mut next_id = FIRST_CONNECTION;
        let mut events = Events::with_capacity(1024);
        let mut draining_since: Option<Instant> = None;

        loop {
            match self.poll.poll(&mut events, Some(POLL_INTERVAL)) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }

            let mut touched: Vec<usize> = Vec::new();
            for event in events.iter() {
                match event.token() {
                    TCP_LISTENER | UNIX_LISTENER if draining_since.is_none() => {
                        self.accept(event.token(), &mut conns, &mut next_id)?;
                    }
                    TCP_LISTENER | UNIX_LISTENER => {}
                    WAKER => {}
                    Token(id) => {
                        if let Some(conn) = conns.get_mut(&id) {
                            if event.is_readable() || event.is_read_closed() {
                                conn.read_available();
                                conn.process_input(id, &dispatcher);
                            }
                            touched.push(id);
                        }
                    }
                }
            }

            wake_pending.store(false, Ordering::SeqCst);
            for c in completions.try_iter() {
                if let Some(conn) = conns.get_mut(&c.conn) {
                    conn.in_flight -= 1;
                    conn.complete(c.seq, c.bytes);
                    touched.push(c.conn);
                }
            }

            if draining_since.is_none() && self.handle.shutdown.load(Ordering::SeqCst) {
                info!("shutdown requested; draining {} connection(s)", conns.len());
                draining_since = Some(Instant::now());
                self.close_listeners()?;
                for (id, conn) in conns.iter_mut() {
                    conn.reads_closed = true;
                    touched.push(*id);
                }
            }

            touched.sort_unstable();
            touched.dedup();
            for id in touched {
                let Some(conn) = conns.get_mut(&id) else { continue };
                conn.flush();
                if conn.finished() {
                    let mut conn = conns.remove(&id).expect("present");
                    let _ = self.poll.registry().deregister(&mut conn.stream);
                    debug!("connection {id} closed");
                }
            }

            if let Some(since) = draining_since {
                if conns.is_empty() {
                    break;
                }
                if since.elapsed() > DRAIN_DEADLINE {
                    warn!("{} connection(s) did not drain in time", conns.len());
                    break;
                }
            }
        }

        drop(dispatcher);
        for w in workers {
            let _ = w.join();
        }
        if let Some((_, path)) = self.unix.take() {
            let _ = std::fs::remove_file(path);
        }
        info!("server stopped");
        Ok(())
    }

    fn accept(
        &mut self,
        token: Token,
        conns: &mut HashMap<usize, Connection>,
        next_id: &mut usize,
    ) -> io::Result<()> {
        loop {
            let accepted = match token {
                TCP_LISTENER => match self.tcp.as_ref().map(|l| l.accept()) {
                    Some(Ok((s, _))) => {
                        let _ = s.set_nodelay(true);
                        Ok(Stream::Tcp(s))
                    }
                    Some(Err(e)) => Err(e),
                    None => return Ok(()),
                },
                _ => match self.unix.as_ref().map(|(l, _)| l.accept()) {
                    Some(Ok((s, _))) => Ok(Stream::Unix(s)),
                    Some(Err(e)) => Err(e),
                    None => return Ok(()),
                },
            };
            let mut stream = match accepted {
                Ok(s) => s,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return Ok(()),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    warn!("accept failed: {e}");
                    return Ok(());
                }
            };
            if conns.len() >= self.config.max_connections {
                warn!("connection limit {} reached; refusing", self.config.max_connections);
                continue;
            }
            let id = *next_id;
            *next_id += 1;
            self.poll
                .registry()
                .register(&mut stream, Token(id), Interest::READABLE | Interest::WRITABLE)?;
            conns.insert(id, Connection::new(stream));
        }
    }

    fn close_listeners(&mut self) -> io::Result<()> {
        if let Some(mut l) = self.tcp.take() {
            self.poll.registry().deregister(&mut l)?;
        }
        if let Some((l, _)) = self.unix.as_mut() {
            self.poll.registry().deregister(l)?;
        }
        Ok(())
    }
}

struct WorkerContext {
    jobs: Receiver<Job>,
    completions: Sender<Completion>,
    engine: Arc<Engine>,
    waker: Arc<Waker>,
    wake_pending: Arc<AtomicBool>,
    delay: Option<Duration>,
}

impl WorkerContext {
    fn run(self) {
        while let Ok(job) = self.jobs.recv() {
            if let Some(d) = self.delay {
                thread::sleep(d);
            }
            let bytes = encode(&self.engine.execute(&job.frame));
            let done = Completion {
                conn: job.conn,
                seq: job.seq,
                bytes,
            };
            if self.completions.send(done).is_err() {
                return;
            }
            // One wake per batch: the network thread clears the flag before
            // draining, so a completion sent after the drain wakes it again.
            if !self.wake_pending.swap(true, Ordering::SeqCst) {
                let _ = self.waker.wake();
            }
        }
    }
}

/// A server running on its own thread; shuts down when dropped.
pub struct RunningServer {
    handle: ServerHandle,
    engine: Arc<Engine>,
    tcp_addr: Option<SocketAddr>,
    socket_path: Option<PathBuf>,
    thread: Option<JoinHandle<Result<(), ServerError>>>,
}

impl RunningServer {
    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.tcp_addr
    }

    pub fn socket_path(&self) -> Option<&Path> {
        self.socket_path.as_deref()
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn handle(&self) -> &ServerHandle {
        &self.handle
    }

    pub fn stop(mut self) -> Result<(), ServerError> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> Result<(), ServerError> {
        self.handle.shutdown();
        match self.thread.take() {
            Some(t) => t.join().expect("network thread panicked"),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}
