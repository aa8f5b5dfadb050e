//! Drives concurrent clients against a server and aggregates the results.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use rand::{Rng, RngCore};
use tagcache_core::wire::{self, Command, StatsBody, Status};
use tagcache_server::{Server, ServerConfig};
use thiserror::Error;

use crate::client::{Client, ClientError};
use crate::workload::{client_rng, generate_dataset, record_key, Mode, Record, WorkloadSpec};
use crate::Endpoint;

const PRELOAD_WINDOW: usize = 64;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    Config(String),
    #[error("preload failed: {0}")]
    Preload(#[source] ClientError),
    #[error("client {client} failed after {} ops: {source}", partial.ops)]
    Client {
        client: usize,
        #[source]
        source: ClientError,
        partial: Box<BenchReport>,
    },
    #[error("cannot start server: {0}")]
    Server(#[from] tagcache_server::ServerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub label: String,
    pub mode: Mode,
    pub endpoint: String,
    pub clients: usize,
    pub pipeline: usize,
    pub seed: u64,
    pub record_count: usize,
    pub read_ratio: f64,
    /// Wall time from the first request to the last response.
    pub elapsed: Duration,
    pub ops: u64,
    pub reads: u64,
    pub writes: u64,
    pub ops_per_second: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    /// Responses with a status other than OK, by status name.
    pub errors: BTreeMap<String, u64>,
    /// Reads whose value disagreed with the shadow model.
    pub mismatches: u64,
    pub per_client_ops_per_second: Vec<f64>,
    /// Server counters read after the run.
    pub server: Option<StatsBody>,
}

impl BenchReport {
    pub fn error_count(&self) -> u64 {
        self.errors.values().sum()
    }

    pub fn read_fraction(&self) -> f64 {
        if self.reads + self.writes == 0 {
            return 0.0;
        }
        self.reads as f64 / (self.reads + self.writes) as f64
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Default)]
struct ClientTally {
    ops: u64,
    reads: u64,
    writes: u64,
    latencies_ns: Vec<u64>,
    statuses: HashMap<Status, u64>,
    mismatches: u64,
    elapsed: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpKind {
    Read,
    Write,
    Null,
}

struct InFlight {
    id: u32,
    sent: Instant,
    kind: OpKind,
    record: usize,
    value: Option<Bytes>,
}

/// Writes every record, keeping a window of requests in flight.
pub fn preload(endpoint: &Endpoint, dataset: &[Record]) -> Result<(), ClientError> {
    let mut client = Client::connect(endpoint)?;
    let mut in_flight = VecDeque::new();
    for rec in dataset {
        let id = client.queue(Command::Put {
            key: rec.key.clone(),
            value: rec.value.clone(),
            tags: rec.tags.clone(),
        })?;
        in_flight.push_back(id);
        if in_flight.len() >= PRELOAD_WINDOW {
            client.flush()?;
            while in_flight.len() > PRELOAD_WINDOW / 2 {
                expect_ok(&mut client, in_flight.pop_front().expect("non-empty"))?;
            }
        }
    }
    client.flush()?;
    while let Some(id) = in_flight.pop_front() {
        expect_ok(&mut client, id)?;
    }
    Ok(())
}

fn expect_ok(client: &mut Client, id: u32) -> Result<(), ClientError> {
    let r = client.recv()?;
    if r.request_id != id {
        return Err(ClientError::OutOfOrder { expected: id, got: r.request_id });
    }
    match r.status {
        Status::Ok => Ok(()),
        s => Err(ClientError::Status(s)),
    }
}

/// Runs the spec's operation mix against an already loaded server.
pub fn run_bench(spec: &WorkloadSpec, endpoint: &Endpoint) -> Result<BenchReport, BenchError> {
    spec.validate().map_err(BenchError::Config)?;
    let model = if spec.verify && spec.mode == Mode::Mixed {
        Some(Arc::new(generate_dataset(spec)))
    } else {
        None
    };
    let started = Instant::now();
    let deadline = started + spec.duration;
    let failure: Arc<AtomicUsize> = Arc::new(AtomicUsize::new(usize::MAX));
    let threads: Vec<_> = (0..spec.clients)
        .map(|c| {
            let spec = spec.clone();
            let endpoint = endpoint.clone();
            let model = model.clone();
            let failure = Arc::clone(&failure);
            thread::spawn(move || {
                let mut tally = ClientTally::default();
                let result = drive_client(c, &spec, &endpoint, deadline, model.as_deref().map(Vec::as_slice), &mut tally);
                if result.is_err() {
                    failure.fetch_min(c, Ordering::SeqCst);
                }
                (tally, result)
            })
        })
        .collect();
    let mut tallies = Vec::new();
    let mut first_error = None;
    for (c, t) in threads.into_iter().enumerate() {
        let (tally, result) = t.join().expect("bench client panicked");
        if let Err(e) = result {
            first_error.get_or_insert((c, e));
        }
        tallies.push(tally);
    }
    let elapsed = started.elapsed();
    let mut report = aggregate(spec, endpoint, &tallies, elapsed);
    match first_error {
        Some((client, source)) => Err(BenchError::Client {
            client,
            source,
            partial: Box::new(report),
        }),
        None => {
            report.server = Client::connect(endpoint).and_then(|mut c| c.stats()).ok();
            Ok(report)
        }
    }
}

/// The null-transaction benchmark: every request is a NOOP.
pub fn run_null_bench(
    endpoint: &Endpoint,
    clients: usize,
    duration: Duration,
    pipeline: usize,
) -> Result<BenchReport, BenchError> {
    let spec = WorkloadSpec {
        mode: Mode::Null,
        clients,
        duration,
        pipeline,
        record_count: 0,
        ..WorkloadSpec::default()
    };
    run_bench(&spec, endpoint)
}

fn drive_client(
    client_index: usize,
    spec: &WorkloadSpec,
    endpoint: &Endpoint,
    deadline: Instant,
    model: Option<&[Record]>,
    tally: &mut ClientTally,
) -> Result<(), ClientError> {
    let started = Instant::now();
    let mut client = Client::connect(endpoint)?;
    let mut rng = client_rng(spec.seed, client_index);
    // With verification each client owns the records congruent to its index.
    let (stride, offset) = if model.is_some() { (spec.clients, client_index) } else { (1, 0) };
    let owned = if spec.record_count > offset { (spec.record_count - offset).div_ceil(stride) } else { 0 };
    let mut shadow: HashMap<usize, Bytes> = HashMap::new();
    // Write values are slices of one random pool so generating them is cheap.
    let max_value = *spec.value_sizes().end();
    let mut pool = vec![0u8; max_value * 2 + 1];
    rng.fill_bytes(&mut pool);
    let pool = Bytes::from(pool);

    let mut window: VecDeque<InFlight> = VecDeque::with_capacity(spec.pipeline);
    let result = (|| -> Result<(), ClientError> {
        loop {
            let sending = Instant::now() < deadline;
            if sending {
                while window.len() < spec.pipeline {
                    let (kind, record, command, value) = match spec.mode {
                        Mode::Null => (OpKind::Null, 0, Command::Noop, None),
                        Mode::Mixed => {
                            let record = offset + stride * rng.random_range(0..owned);
                            if rng.random_bool(spec.read_ratio) {
                                (OpKind::Read, record, Command::Get { key: record_key(record) }, None)
                            } else {
                                let len = rng.random_range(spec.value_sizes());
                                let start = rng.random_range(0..=pool.len() - len);
                                let value = pool.slice(start..start + len);
                                let command = Command::Put {
                                    key: record_key(record),
                                    value: value.clone(),
                                    tags: Vec::new(),
                                };
                                (OpKind::Write, record, command, Some(value))
                            }
                        }
                    };
                    let id = client.queue(command)?;
                    window.push_back(InFlight { id, sent: Instant::now(), kind, record, value });
                }
                client.flush()?;
            }
            let Some(head) = window.pop_front() else { break };
            let r = client.recv()?;
            if r.request_id != head.id {
                return Err(ClientError::OutOfOrder { expected: head.id, got: r.request_id });
            }
            tally.latencies_ns.push(head.sent.elapsed().as_nanos() as u64);
            tally.ops += 1;
            if r.status != Status::Ok {
                *tally.statuses.entry(r.status).or_default() += 1;
            }
            match head.kind {
                OpKind::Null => {}
                OpKind::Read => {
                    tally.reads += 1;
                    if let Some(data) = model {
                        let expect = shadow.get(&head.record).unwrap_or(&data[head.record].value);
                        let got = (r.status == Status::Ok).then(|| wire::parse_get_body(&r.body)).transpose()?;
                        if got.as_ref() != Some(expect) {
                            tally.mismatches += 1;
                        }
                    }
                }
                OpKind::Write => {
                    tally.writes += 1;
                    if model.is_some() && r.status == Status::Ok {
                        shadow.insert(head.record, head.value.expect("writes carry their value"));
                    }
                }
            }
        }
        Ok(())
    })();
    tally.elapsed = started.elapsed();
    result
}

fn aggregate(spec: &WorkloadSpec, endpoint: &Endpoint, tallies: &[ClientTally], elapsed: Duration) -> BenchReport {
    let mut latencies: Vec<u64> = tallies.iter().flat_map(|t| t.latencies_ns.iter().copied()).collect();
    latencies.sort_unstable();
    let ops: u64 = tallies.iter().map(|t| t.ops).sum();
    let mut errors = BTreeMap::new();
    for t in tallies {
        for (status, n) in &t.statuses {
            *errors.entry(format!("{status:?}")).or_insert(0) += n;
        }
    }
    let us = |p| percentile(&latencies, p) as f64 / 1000.0;
    BenchReport {
        label: String::new(),
        mode: spec.mode,
        endpoint: endpoint.to_string(),
        clients: spec.clients,
        pipeline: spec.pipeline,
        seed: spec.seed,
        record_count: spec.record_count,
        read_ratio: spec.read_ratio,
        elapsed,
        ops,
        reads: tallies.iter().map(|t| t.reads).sum(),
        writes: tallies.iter().map(|t| t.writes).sum(),
        ops_per_second: ops as f64 / elapsed.as_secs_f64(),
        p50_us: us(50.0),
        p95_us: us(95.0),
        p99_us: us(99.0),
        errors,
        mismatches: tallies.iter().map(|t| t.mismatches).sum(),
        per_client_ops_per_second: tallies
            .iter()
            .map(|t| t.ops as f64 / t.elapsed.as_secs_f64().max(f64::MIN_POSITIVE))
            .collect(),
        server: None,
    }
}

#[derive(serde::Serialize)]
struct CsvRow<'a> {
    label: &'a str,
    mode: Mode,
    endpoint: &'a str,
    clients: usize,
    pipeline: usize,
    seed: u64,
    records: usize,
    read_ratio: f64,
    duration_s: f64,
    ops: u64,
    reads: u64,
    writes: u64,
    ops_per_second: f64,
    p50_us: f64,
    p95_us: f64,
    p99_us: f64,
    errors: u64,
    server_busy: u64,
    mismatches: u64,
    server_records: Option<u64>,
    server_buckets: Option<u32>,
    server_exclusive_acquisitions: Option<u64>,
}

/// Writes one row per report. Appending to an existing file skips the header.
pub fn write_csv(path: &Path, reports: &[BenchReport], append: bool) -> Result<(), csv::Error> {
    let exists = append && path.exists() && std::fs::metadata(path)?.len() > 0;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in reports {
        w.serialize(CsvRow {
            label: &r.label,
            mode: r.mode,
            endpoint: &r.endpoint,
            clients: r.clients,
            pipeline: r.pipeline,
            seed: r.seed,
            records: r.record_count,
            read_ratio: r.read_ratio,
            duration_s: r.elapsed.as_secs_f64(),
            ops: r.ops,
            reads: r.reads,
            writes: r.writes,
            ops_per_second: r.ops_per_second,
            p50_us: r.p50_us,
            p95_us: r.p95_us,
            p99_us: r.p99_us,
            errors: r.error_count(),
            server_busy: r.errors.get("ServerBusy").copied().unwrap_or(0),
            mismatches: r.mismatches,
            server_records: r.server.map(|s| s.records),
            server_buckets: r.server.map(|s| s.buckets),
            server_exclusive_acquisitions: r.server.and_then(|s| s.instrument).map(|i| i.exclusive_acquisitions),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Null-transaction throughput of a threadless server against a
/// one-worker server, both on a private local socket in this process.
#[derive(Debug, Clone)]
pub struct ThreadlessComparison {
    pub threadless: Vec<BenchReport>,
    pub one_worker: Vec<BenchReport>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => (values[n / 2 - 1] + values[n / 2]) / 2.0,
    }
}

impl ThreadlessComparison {
    pub fn median_threadless(&self) -> f64 {
        median(&mut self.threadless.iter().map(|r| r.ops_per_second).collect::<Vec<_>>())
    }

    pub fn median_one_worker(&self) -> f64 {
        median(&mut self.one_worker.iter().map(|r| r.ops_per_second).collect::<Vec<_>>())
    }

    /// Median threadless throughput over median one-worker throughput.
    pub fn ratio(&self) -> f64 {
        self.median_threadless() / self.median_one_worker()
    }

    /// The median run of each configuration, for a two-row CSV.
    pub fn median_rows(&self) -> Vec<BenchReport> {
        [&self.threadless, &self.one_worker]
            .into_iter()
            .filter(|runs| !runs.is_empty())
            .map(|runs| {
                let mut sorted: Vec<_> = runs.iter().collect();
                sorted.sort_by(|a, b| a.ops_per_second.total_cmp(&b.ops_per_second));
                sorted[sorted.len() / 2].clone()
            })
            .collect()
    }
}

fn private_socket_path(tag: &str) -> std::path::PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    std::env::temp_dir().join(format!(
        "tagcache-bench-{}-{}-{tag}.sock",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ))
}

/// Alternates runs between the two configurations so drift in host load
/// affects both equally.
pub fn compare_threadless(
    clients: usize,
    duration: Duration,
    runs: usize,
    pipeline: usize,
) -> Result<ThreadlessComparison, BenchError> {
    let mut cmp = ThreadlessComparison {
        threadless: Vec::new(),
        one_worker: Vec::new(),
    };
    for _ in 0..runs {
        for workers in [0, 1] {
            let path = private_socket_path(&format!("w{workers}"));
            let server = Server::bind(ServerConfig {
                workers,
                tcp: None,
                socket: Some(path.clone()),
                ..ServerConfig::default()
            })?
            .spawn();
            let mut report = run_null_bench(&Endpoint::Unix(path), clients, duration, pipeline);
            server.stop()?;
            if let Ok(r) = &mut report {
                r.label = format!("workers={workers}");
            }
            let report = report?;
            if workers == 0 {
                cmp.threadless.push(report);
            } else {
                cmp.one_worker.push(report);
            }
        }
    }
    Ok(cmp)
}
