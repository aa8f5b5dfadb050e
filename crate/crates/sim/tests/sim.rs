use tagcache_sim::{simulate, sweep, write_csv, SimConfig, SweepSpec};

fn config(workers: usize, buckets: usize, read_ratio: f64) -> SimConfig {
    SimConfig {
        workers,
        buckets,
        read_ratio,
        total_tasks: 100_000,
        ..SimConfig::default()
    }
}

/// Mean queue length and blocking probability of an M/M/c/K queue with
/// unit service rate, from its stationary distribution.
fn mmck(arrival_rate: f64, servers: usize, capacity: usize) -> (f64, f64) {
    let mut weights = vec![1.0f64];
    for n in 1..=capacity {
        let busy = n.min(servers) as f64;
        weights.push(weights[n - 1] * arrival_rate / busy);
    }
    let total: f64 = weights.iter().sum();
    let queue: f64 = weights
        .iter()
        .enumerate()
        .map(|(n, w)| n.saturating_sub(servers) as f64 * w)
        .sum();
    (queue / total, weights[capacity] / total)
}

#[test]
fn single_worker_is_always_fast() {
    for buckets in [1, 4, 256] {
        for p in [0.0, 0.5, 1.0] {
            let r = simulate(&config(1, buckets, p)).unwrap();
            assert_eq!(r.fast_shared_pct, 100.0);
            assert_eq!(r.fast_exclusive_pct, 100.0);
        }
    }
}

#[test]
fn identical_config_identical_report() {
    let c = config(8, 16, 0.8);
    assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
    let other = SimConfig { seed: 99, ..c.clone() };
    assert_ne!(simulate(&c).unwrap(), simulate(&other).unwrap());
}

#[test]
fn tasks_are_conserved() {
    for (w, b) in [(8, 1), (64, 64), (8, 1024)] {
        let r = simulate(&config(w, b, 0.5)).unwrap();
        assert_eq!(r.generated_tasks, 100_000);
        assert_eq!(r.completed_tasks + r.dropped_tasks, r.generated_tasks);
        assert_eq!(r.shared_acquisitions + r.exclusive_acquisitions, r.completed_tasks);
    }
}

#[test]
fn readers_only_queue_matches_mmck() {
    // With every task a reader no lock ever blocks, so the model reduces
    // to a plain multi-server queue with a finite waiting room.
    let (workers, capacity, rate) = (4, 10, 3.6);
    let r = simulate(&SimConfig {
        workers,
        buckets: 1,
        read_ratio: 1.0,
        arrival_rate: rate,
        queue_capacity: capacity,
        total_tasks: 2_000_000,
        ..SimConfig::default()
    })
    .unwrap();
    assert_eq!(r.fast_shared_pct, 100.0);
    let (lq, blocking) = mmck(rate, workers, workers + capacity);
    let dropped = r.dropped_tasks as f64 / r.generated_tasks as f64;
    assert!((r.mean_queue_length - lq).abs() / lq < 0.03, "Lq {} vs {lq}", r.mean_queue_length);
    assert!((dropped - blocking).abs() < 0.003, "drops {dropped} vs {blocking}");
}

#[test]
fn writers_on_one_bucket_serialize() {
    // One bucket and only writers: the lock is a single server, so every
    // acquisition with another worker already holding is slow.
    let r = simulate(&SimConfig {
        arrival_rate: 10.0,
        total_tasks: 200_000,
        ..config(4, 1, 0.0)
    })
    .unwrap();
    assert_eq!(r.shared_acquisitions, 0);
    assert!(r.fast_exclusive_pct < 5.0, "{}", r.fast_exclusive_pct);
    // Throughput is capped at one task per mean hold time.
    let throughput = r.completed_tasks as f64 / r.end_time;
    assert!((throughput - 1.0).abs() < 0.02, "{throughput}");
}

#[test]
fn invalid_configs_rejected() {
    assert!(simulate(&config(0, 8, 0.5)).is_err());
    assert!(simulate(&config(8, 0, 0.5)).is_err());
    assert!(simulate(&config(8, 8, 1.5)).is_err());
    assert!(simulate(&SimConfig { arrival_rate: 0.0, ..config(8, 8, 0.5) }).is_err());
}

#[test]
fn unlocked_phase_lowers_contention() {
    let locked = simulate(&config(8, 8, 0.8)).unwrap();
    let split = simulate(&SimConfig { unlocked_time: 1.0, ..config(8, 8, 0.8) }).unwrap();
    assert!(split.fast_shared_pct > locked.fast_shared_pct);
}

#[test]
fn sweep_rows_and_csv_schema() {
    let spec = SweepSpec {
        workers: vec![2, 4],
        buckets: vec![1, 8],
        read_ratios: vec![0.9, 0.5],
        base: SimConfig {
            total_tasks: 5_000,
            ..SimConfig::default()
        },
    };
    let rows = sweep(&spec).unwrap();
    assert_eq!(rows.len(), 8);
    let keys: Vec<_> = rows.iter().map(|r| (r.config.workers, r.config.read_ratio, r.config.buckets)).collect();
    assert_eq!(keys[0], (2, 0.9, 1));
    assert_eq!(keys[7], (4, 0.5, 8));
    assert_eq!(rows, sweep(&spec).unwrap());
    let mut out = Vec::new();
    write_csv(&mut out, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "W,B,p,fast_shared_pct,fast_exclusive_pct,dropped_tasks,mean_queue_length"
    );
    assert_eq!(lines.count(), 8);
}
