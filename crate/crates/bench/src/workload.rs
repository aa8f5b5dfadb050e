//! Deterministic datasets and operation mixes.

use std::time::Duration;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagcache_core::Tag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Reads and overwrites of preloaded records.
    Mixed,
    /// NOOP requests only.
    Null,
}

/// Which records carry tags and what tags they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct TagProfile {
    pub tagged_fraction: f64,
    /// Tag types are drawn from `1..=type_count`.
    pub type_count: i64,
    /// Tag values are drawn from `0..value_range`.
    pub value_range: i64,
}

impl Default for TagProfile {
    fn default() -> Self {
        TagProfile {
            tagged_fraction: 0.0,
            type_count: 4,
            value_range: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub mode: Mode,
    pub record_count: usize,
    pub value_mean: usize,
    pub value_half_width: usize,
    pub read_ratio: f64,
    pub clients: usize,
    pub duration: Duration,
    pub seed: u64,
    /// Requests each client keeps in flight.
    pub pipeline: usize,
    pub tags: TagProfile,
    /// Check every read against a shadow model. Clients then work on
    /// disjoint key subsets so each model stays exact.
    pub verify: bool,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            mode: Mode::Mixed,
            record_count: 30_000,
            value_mean: 1024,
            value_half_width: 500,
            read_ratio: 0.9,
            clients: 10,
            duration: Duration::from_secs(10),
            seed: 42,
            pipeline: 1,
            tags: TagProfile::default(),
            verify: false,
        }
    }
}

impl WorkloadSpec {
    pub fn value_sizes(&self) -> std::ops::RangeInclusive<usize> {
        self.value_mean.saturating_sub(self.value_half_width)..=self.value_mean + self.value_half_width
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.read_ratio) {
            return Err(format!("read ratio {} outside [0, 1]", self.read_ratio));
        }
        if !(0.0..=1.0).contains(&self.tags.tagged_fraction) {
            return Err(format!("tagged fraction {} outside [0, 1]", self.tags.tagged_fraction));
        }
        if self.clients == 0 || self.pipeline == 0 {
            return Err("clients and pipeline depth must be at least 1".into());
        }
        if self.mode == Mode::Mixed && self.record_count == 0 {
            return Err("a mixed workload needs at least one record".into());
        }
        if self.verify && self.mode == Mode::Mixed && self.record_count < self.clients {
            return Err("verification needs at least one record per client".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub key: Bytes,
    pub value: Bytes,
    pub tags: Vec<Tag>,
}

pub fn record_key(index: usize) -> Bytes {
    Bytes::from(format!("rec:{index:08}"))
}

/// Random bytes of a size drawn uniformly from the spec's value range.
pub fn random_value<R: Rng>(rng: &mut R, spec: &WorkloadSpec) -> Bytes {
    let mut value = vec![0u8; rng.random_range(spec.value_sizes())];
    rng.fill_bytes(&mut value);
    Bytes::from(value)
}

/// The preload dataset: `record_count` unique keys with random values.
/// The same spec always yields the same bytes.
pub fn generate_dataset(spec: &WorkloadSpec) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.record_count)
        .map(|i| {
            let value = random_value(&mut rng, spec);
            let tags = if rng.random_bool(spec.tags.tagged_fraction) {
                vec![Tag::new(
                    rng.random_range(1..=spec.tags.type_count.max(1)),
                    rng.random_range(0..spec.tags.value_range.max(1)),
                )]
            } else {
                Vec::new()
            };
            Record {
                key: record_key(i),
                value,
                tags,
            }
        })
        .collect()
}

/// A per-client generator seeded from the spec seed and the client index.
pub fn client_rng(seed: u64, client: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(client as u64 + 1);
    rng
}
