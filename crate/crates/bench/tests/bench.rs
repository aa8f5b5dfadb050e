use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use tagcache_bench::{
    compare_threadless, generate_dataset, preload, run_bench, run_null_bench, write_csv, BenchError, Client, Endpoint,
    Mode, WorkloadSpec,
};
use tagcache_core::{CmpOp, StoreConfig, Tag};
use tagcache_server::{RunningServer, Server, ServerConfig};

/// Throughput tests take turns so they do not measure each other.
static TIMING: Mutex<()> = Mutex::new(());

fn turn() -> MutexGuard<'static, ()> {
    TIMING.lock().unwrap_or_else(|e| e.into_inner())
}

fn server(workers: usize, instrument: bool) -> (RunningServer, Endpoint) {
    let config = ServerConfig {
        store: StoreConfig {
            instrument,
            ..StoreConfig::default()
        },
        ..ServerConfig::loopback(workers)
    };
    let srv = Server::bind(config).unwrap().spawn();
    let ep = Endpoint::Tcp(srv.tcp_addr().unwrap().to_string());
    (srv, ep)
}

fn small_spec(clients: usize) -> WorkloadSpec {
    WorkloadSpec {
        record_count: 2000,
        clients,
        duration: Duration::from_millis(500),
        ..WorkloadSpec::default()
    }
}

#[test]
fn typed_round_trips() {
    let (_srv, ep) = server(2, false);
    let mut c = Client::connect(&ep).unwrap();
    c.noop().unwrap();
    assert!(!c.put(b"k", b"v", &[]).unwrap());
    assert!(c.put(b"k", b"w", &[]).unwrap());
    assert_eq!(c.get(b"k").unwrap().as_deref(), Some(&b"w"[..]));
    assert_eq!(c.get(b"nope").unwrap(), None);
    assert_eq!(
        c.mget(&[b"k", b"nope"]).unwrap(),
        vec![Some(bytes::Bytes::from_static(b"w")), None]
    );
    assert!(c.delete(b"k").unwrap());
    assert!(!c.delete(b"k").unwrap());
    assert_eq!(c.stats().unwrap().records, 0);
    c.quit().unwrap();
}

#[test]
fn expire_count_matches_prior_query() {
    let (_srv, ep) = server(2, false);
    let mut c = Client::connect(&ep).unwrap();
    for i in 0..100i64 {
        c.put(format!("t{i}").as_bytes(), b"x", &[Tag::new(1, i % 10), Tag::new(2, i)]).unwrap();
    }
    let queried = c.tag_query(1, CmpOp::Gt, 5).unwrap();
    assert_eq!(queried.len(), 40);
    assert_eq!(c.tag_expire(1, CmpOp::Gt, 5).unwrap() as usize, queried.len());
    assert!(c.tag_query(1, CmpOp::Gt, 5).unwrap().is_empty());
    assert_eq!(c.stats().unwrap().records, 60);
}

#[test]
fn dataset_sizes_cover_the_range() {
    let spec = WorkloadSpec::default();
    let data = generate_dataset(&spec);
    assert_eq!(data.len(), 30_000);
    let min = data.iter().map(|r| r.value.len()).min().unwrap();
    let max = data.iter().map(|r| r.value.len()).max().unwrap();
    assert!((524..=1524).contains(&min) && (524..=1524).contains(&max));
    // Within 1% of the 1000-byte span from each bound.
    assert!(min <= 524 + 10, "min {min}");
    assert!(max >= 1524 - 10, "max {max}");
}

#[test]
fn read_only_mix_takes_no_exclusive_locks() {
    let _turn = turn();
    let (srv, ep) = server(4, true);
    let spec = WorkloadSpec {
        read_ratio: 1.0,
        ..small_spec(4)
    };
    preload(&ep, &generate_dataset(&spec)).unwrap();
    let before = srv.engine().store().exclusive_acquisitions();
    let report = run_bench(&spec, &ep).unwrap();
    assert!(report.ops > 0);
    assert_eq!(report.writes, 0);
    assert_eq!(srv.engine().store().exclusive_acquisitions(), before);
    let echoed = report.server.unwrap().instrument.unwrap();
    assert_eq!(echoed.exclusive_acquisitions, before);
}

#[test]
fn observed_mix_and_shadow_model() {
    let _turn = turn();
    let (_srv, ep) = server(2, false);
    let spec = WorkloadSpec {
        verify: true,
        pipeline: 8,
        duration: Duration::from_secs(1),
        ..small_spec(1)
    };
    preload(&ep, &generate_dataset(&spec)).unwrap();
    let report = run_bench(&spec, &ep).unwrap();
    assert!(report.ops >= 10_000, "only {} ops", report.ops);
    assert!((report.read_fraction() - 0.9).abs() <= 0.02, "{}", report.read_fraction());
    assert_eq!(report.mismatches, 0);
    assert_eq!(report.error_count(), 0);
}

#[test]
fn verified_clients_on_disjoint_keys() {
    let _turn = turn();
    let (_srv, ep) = server(4, false);
    let spec = WorkloadSpec {
        verify: true,
        read_ratio: 0.5,
        ..small_spec(6)
    };
    preload(&ep, &generate_dataset(&spec)).unwrap();
    let report = run_bench(&spec, &ep).unwrap();
    assert!(report.reads > 0 && report.writes > 0);
    assert_eq!(report.mismatches, 0);
    assert_eq!(report.per_client_ops_per_second.len(), 6);
}

#[test]
fn null_bench_is_live_and_repeatable() {
    let _turn = turn();
    let (_srv, ep) = server(1, false);
    let a = run_null_bench(&ep, 2, Duration::from_secs(2), 1).unwrap();
    let b = run_null_bench(&ep, 2, Duration::from_secs(2), 1).unwrap();
    assert_eq!(a.mode, Mode::Null);
    assert!(a.ops_per_second > 0.0 && b.ops_per_second > 0.0);
    let spread = (a.ops_per_second - b.ops_per_second).abs() / a.ops_per_second.max(b.ops_per_second);
    assert!(spread <= 0.15, "{} vs {}", a.ops_per_second, b.ops_per_second);
}

#[test]
fn comparison_writes_two_rows() {
    let _turn = turn();
    let cmp = compare_threadless(2, Duration::from_millis(300), 1, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("null.csv");
    write_csv(&path, &cmp.median_rows(), false).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with("label,mode,"));
    assert!(lines[1].starts_with("workers=0,null,"));
    assert!(lines[2].starts_with("workers=1,null,"));
    // Appending keeps a single header.
    write_csv(&path, &cmp.median_rows(), true).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 5);
}

#[test]
fn unreachable_server_reports_partial_failure() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let ep = Endpoint::Tcp(listener.local_addr().unwrap().to_string());
    drop(listener);
    match run_bench(&small_spec(2), &ep) {
        Err(BenchError::Client { partial, .. }) => assert_eq!(partial.ops, 0),
        other => panic!("expected a client failure, got {other:?}"),
    }
}
