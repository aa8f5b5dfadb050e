//! The primary data pool: a fixed array of buckets, each an ordered tree of
//! records behind its own shared-exclusive lock and byte budget.
//!
//! The bucket array is sized once at construction and never locked. A write
//! locks exactly one bucket. When a write would push a bucket over its
//! budget, the oldest records in that bucket are evicted (insertion order,
//! not recency) while the exclusive lock is already held.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use bytes::Bytes;

use crate::error::{ConfigError, StoreError};
use crate::lock::{LockCounters, RwLock};
use crate::rbtree::RbTree;
use crate::tagindex::{IndexLockStats, TagIndex};
use crate::types::{CmpOp, Key, TagSet, MAX_VALUE_LEN};

pub const DEFAULT_BUCKET_COUNT: usize = 256;
pub const DEFAULT_BUCKET_LIMIT: u64 = 1 << 20;
pub const RECORD_OVERHEAD: u64 = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Bucket index of `key` for a power-of-two `bucket_count`.
pub fn bucket_of(key: &[u8], bucket_count: usize) -> usize {
    debug_assert!(bucket_count.is_power_of_two());
    (fnv1a64(key) & (bucket_count as u64 - 1)) as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreConfig {
    pub bucket_count: usize,
    pub bucket_limit_bytes: u64,
    pub record_overhead_bytes: u64,
    /// Count lock acquisitions per bucket and in the tag index.
    pub instrument: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            bucket_count: DEFAULT_BUCKET_COUNT,
            bucket_limit_bytes: DEFAULT_BUCKET_LIMIT,
            record_overhead_bytes: RECORD_OVERHEAD,
            instrument: false,
        }
    }
}

impl StoreConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bucket_count == 0 || !self.bucket_count.is_power_of_two() {
            return Err(ConfigError::BucketCount(self.bucket_count));
        }
        // The smallest record is a one-byte key with an empty value.
        if self.bucket_limit_bytes < self.record_overhead_bytes + 1 {
            return Err(ConfigError::BucketLimit(self.bucket_limit_bytes));
        }
        Ok(())
    }

    pub fn record_size(&self, key_len: usize, value_len: usize) -> u64 {
        key_len as u64 + value_len as u64 + self.record_overhead_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Inserted,
    Replaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteOutcome {
    Deleted,
    NotFound,
}

#[derive(Debug, Clone)]
struct Record {
    value: Bytes,
    tags: TagSet,
    byte_size: u64,
    seq: u64,
}

/// Read-only view of a stored record, for inspection and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordInfo {
    pub key: Key,
    pub value: Bytes,
    pub tags: TagSet,
    pub byte_size: u64,
    pub seq: u64,
}

#[derive(Default)]
struct BucketData {
    records: RbTree<Key, Record>,
    /// Insertion order for eviction: seq -> key.
    by_seq: RbTree<u64, Key>,
    used_bytes: u64,
    evictions: u64,
}

impl BucketData {
    fn remove(&mut self, key: &Key) -> Option<Record> {
        let rec = self.records.remove(key)?;
        self.by_seq.remove(&rec.seq);
        self.used_bytes -= rec.byte_size;
        Some(rec)
    }

    /// Evicts oldest-inserted records until `needed` more bytes fit.
    /// Caller holds the bucket's exclusive lock.
    fn collect_garbage(&mut self, needed: u64, limit: u64, index: &TagIndex) -> Result<u64, StoreError> {
        if needed > limit {
            return Err(StoreError::TooLarge { size: needed, limit });
        }
        let mut freed = 0;
        while self.used_bytes + needed > limit {
            let (_, key) = self
                .by_seq
                .pop_first()
                .expect("used_bytes > 0 implies a resident record");
            let rec = self.records.remove(&key).expect("seq index matches records");
            self.used_bytes -= rec.byte_size;
            freed += rec.byte_size;
            self.evictions += 1;
            index.remove(&key, &rec.tags);
        }
        Ok(freed)
    }
}

struct Bucket {
    data: RwLock<BucketData>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BucketStats {
    pub records: u64,
    pub used_bytes: u64,
    pub evictions: u64,
    pub shared_acquisitions: u64,
    pub exclusive_acquisitions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub buckets: Vec<BucketStats>,
    pub total: BucketStats,
    pub index: IndexLockStats,
}

pub struct Store {
    config: StoreConfig,
    buckets: Box<[Bucket]>,
    index: TagIndex,
    next_seq: AtomicU64,
}

impl Store {
    pub fn new(config: StoreConfig) -> Result<Store, ConfigError> {
        config.validate()?;
        let buckets = (0..config.bucket_count)
            .map(|_| Bucket {
                data: RwLock::with_counters(
                    BucketData::default(),
                    config.instrument.then(LockCounters::new),
                ),
            })
            .collect();
        Ok(Store {
            index: TagIndex::new(config.instrument),
            config,
            buckets,
            next_seq: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn index(&self) -> &TagIndex {
        &self.index
    }

    pub fn bucket_of(&self, key: &[u8]) -> usize {
        bucket_of(key, self.config.bucket_count)
    }

    fn bucket(&self, key: &Key) -> &Bucket {
        &self.buckets[self.bucket_of(key.as_bytes())]
    }

    pub fn get(&self, key: &Key) -> Option<Bytes> {
        let data = self.bucket(key).data.read();
        data.records.get(key).map(|r| r.value.clone())
    }

    /// Per-key snapshots, one bucket lock at a time, in request order.
    pub fn get_many(&self, keys: &[Key]) -> Vec<(Key, Option<Bytes>)> {
        keys.iter().map(|k| (k.clone(), self.get(k))).collect()
    }

    /// Inserts or replaces `key`. Replacement swaps both value and tags.
    pub fn put(&self, key: Key, value: Bytes, tags: TagSet) -> Result<PutOutcome, StoreError> {
        let limit = self.config.bucket_limit_bytes;
        let size = self.config.record_size(key.len(), value.len());
        if value.len() as u64 > MAX_VALUE_LEN || size > limit {
            return Err(StoreError::TooLarge { size, limit });
        }

        let mut data = self.bucket(&key).data.write();
        let old = data.remove(&key);
        data.collect_garbage(size, limit, &self.index)?;
        let seq = self.next_seq.fetch_add(1, Ordering::Relaxed);

        let outcome = match &old {
            Some(old) if old.tags == tags => PutOutcome::Replaced,
            Some(old) => {
                self.index.remove(&key, &old.tags);
                self.index.add(&key, &tags);
                PutOutcome::Replaced
            }
            None => {
                self.index.add(&key, &tags);
                PutOutcome::Inserted
            }
        };
        data.by_seq.insert(seq, key.clone());
        data.records.insert(
            key,
            Record {
                value,
                tags,
                byte_size: size,
                seq,
            },
        );
        data.used_bytes += size;
        Ok(outcome)
    }

    pub fn delete(&self, key: &Key) -> DeleteOutcome {
        self.delete_if(key, |_| true)
    }

    /// Deletes `key` only if its current tags satisfy `pred`, checked under
    /// the bucket's exclusive lock.
    pub fn delete_if(&self, key: &Key, pred: impl FnOnce(&TagSet) -> bool) -> DeleteOutcome {
        let mut data = self.bucket(key).data.write();
        match data.records.get(key) {
            Some(rec) if pred(&rec.tags) => {}
            _ => return DeleteOutcome::NotFound,
        }
        let rec = data.remove(key).expect("checked above");
        self.index.remove(key, &rec.tags);
        DeleteOutcome::Deleted
    }

    pub fn query_type(&self, ttype: i64) -> Vec<Key> {
        self.index.query_type(ttype)
    }

    pub fn query_cmp(&self, ttype: i64, op: CmpOp, operand: i64) -> Vec<Key> {
        self.index.query_cmp(ttype, op, operand)
    }

    /// Deletes every record whose `ttype` tag satisfies `op operand`.
    ///
    /// Runs the query first, releases the index, then deletes key by key.
    /// A key is only deleted if it still matches at deletion time, so
    /// records inserted or retagged after the query are left alone.
    pub fn expire_group(&self, ttype: i64, op: CmpOp, operand: i64) -> usize {
        self.index
            .query_cmp(ttype, op, operand)
            .iter()
            .filter(|key| {
                let outcome = self.delete_if(key, |tags| {
                    tags.get(ttype).is_some_and(|v| op.matches(v, operand))
                });
                outcome == DeleteOutcome::Deleted
            })
            .count()
    }

    pub fn stats(&self) -> StoreStats {
        let buckets: Vec<BucketStats> = self
            .buckets
            .iter()
            .map(|b| {
                let (shared, exclusive) = b
                    .data
                    .counters()
                    .map_or((0, 0), |c| (c.shared(), c.exclusive()));
                let data = b.data.read();
                BucketStats {
                    records: data.records.len() as u64,
                    used_bytes: data.used_bytes,
                    evictions: data.evictions,
                    shared_acquisitions: shared,
                    exclusive_acquisitions: exclusive,
                }
            })
            .collect();
        let total = buckets.iter().fold(BucketStats::default(), |acc, b| BucketStats {
            records: acc.records + b.records,
            used_bytes: acc.used_bytes + b.used_bytes,
            evictions: acc.evictions + b.evictions,
            shared_acquisitions: acc.shared_acquisitions + b.shared_acquisitions,
            exclusive_acquisitions: acc.exclusive_acquisitions + b.exclusive_acquisitions,
        });
        StoreStats {
            buckets,
            total,
            index: self.index.lock_stats(),
        }
    }

    /// Exclusive bucket-lock acquisitions so far (0 when not instrumented).
    pub fn exclusive_acquisitions(&self) -> u64 {
        self.buckets
            .iter()
            .filter_map(|b| b.data.counters())
            .map(|c| c.exclusive())
            .sum()
    }

    /// Records of one bucket in key order.
    pub fn bucket_records(&self, bucket: usize) -> Vec<RecordInfo> {
        let data = self.buckets[bucket].data.read();
        data.records
            .iter()
            .map(|(k, r)| RecordInfo {
                key: k.clone(),
                value: r.value.clone(),
                tags: r.tags.clone(),
                byte_size: r.byte_size,
                seq: r.seq,
            })
            .collect()
    }

    /// Verifies the tree, seq-index and byte accounting of one bucket.
    #[doc(hidden)]
    pub fn check_bucket(&self, bucket: usize) -> Result<(), String> {
        let data = self.buckets[bucket].data.read();
        data.records.check_invariants()?;
        data.by_seq.check_invariants()?;
        let n = data.records.len();
        if data.records.height() as f64 > 2.0 * ((n + 1) as f64).log2() {
            return Err(format!("height {} too large for {} records", data.records.height(), n));
        }
        let sum: u64 = data.records.values().map(|r| r.byte_size).sum();
        if sum != data.used_bytes {
            return Err(format!("used_bytes {} but records sum to {}", data.used_bytes, sum));
        }
        if data.used_bytes > self.config.bucket_limit_bytes {
            return Err(format!("used_bytes {} over limit", data.used_bytes));
        }
        if data.by_seq.len() != n {
            return Err("seq index out of sync".into());
        }
        for (k, r) in data.records.iter() {
            if r.byte_size != self.config.record_size(k.len(), r.value.len()) {
                return Err("stale byte_size".into());
            }
            if self.bucket_of(k.as_bytes()) != bucket {
                return Err("record in wrong bucket".into());
            }
            if data.by_seq.get(&r.seq) != Some(k) {
                return Err("seq index out of sync".into());
            }
        }
        Ok(())
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }
}

/// A store shared between threads.
pub type SharedStore = Arc<Store>;
