use std::io::Write;

use rayon::prelude::*;

use crate::sim::{simulate, SimConfig, SimConfigError, SimReport};

pub const DEFAULT_WORKERS: [usize; 2] = [8, 64];
pub const DEFAULT_READ_RATIOS: [f64; 3] = [0.9, 0.8, 0.5];

/// Bucket counts 1, 2, 4, ..., 1024.
pub fn default_buckets() -> Vec<usize> {
    (0..=10).map(|i| 1usize << i).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub workers: Vec<usize>,
    pub buckets: Vec<usize>,
    pub read_ratios: Vec<f64>,
    /// Every row shares this configuration apart from W, B and p.
    pub base: SimConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            workers: DEFAULT_WORKERS.to_vec(),
            buckets: default_buckets(),
            read_ratios: DEFAULT_READ_RATIOS.to_vec(),
            base: SimConfig::default(),
        }
    }
}

/// One report per (W, B, p), ordered by W, then p, then B. Configurations
/// run in parallel; each is deterministic on its own.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SimReport>, SimConfigError> {
    let configs: Vec<SimConfig> = spec
        .workers
        .iter()
        .flat_map(|&w| {
            spec.read_ratios.iter().flat_map(move |&p| {
                spec.buckets.iter().map(move |&b| SimConfig {
                    workers: w,
                    buckets: b,
                    read_ratio: p,
                    ..spec.base.clone()
                })
            })
        })
        .collect();
    configs.par_iter().map(simulate).collect()
}

#[derive(serde::Serialize)]
struct Row {
    #[serde(rename = "W")]
    workers: usize,
    #[serde(rename = "B")]
    buckets: usize,
    p: f64,
    fast_shared_pct: f64,
    fast_exclusive_pct: f64,
    dropped_tasks: u64,
    mean_queue_length: f64,
}

pub fn write_csv<W: Write>(out: W, reports: &[SimReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(Row {
            workers: r.config.workers,
            buckets: r.config.buckets,
            p: r.config.read_ratio,
            fast_shared_pct: r.fast_shared_pct,
            fast_exclusive_pct: r.fast_exclusive_pct,
            dropped_tasks: r.dropped_tasks,
            mean_queue_length: r.mean_queue_length,
        })?;
    }
    w.flush()?;
    Ok(())
}
