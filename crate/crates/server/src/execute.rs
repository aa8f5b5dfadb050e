//! Maps decoded requests onto store and tag-index operations.

use std::sync::atomic::{AtomicU64, Ordering};

use bytes::Bytes;
use tagcache_core::wire::{self, Command, InstrumentCounters, RequestFrame, ResponseFrame, StatsBody, Status};
use tagcache_core::{Key, PutOutcome, DeleteOutcome, Store, StoreError, TagSet};

/// The state every request executes against: the store plus server-level
/// counters reported through STATS.
pub struct Engine {
    store: Store,
    handoffs: AtomicU64,
}

impl Engine {
    pub fn new(store: Store) -> Engine {
        Engine {
            store,
            handoffs: AtomicU64::new(0),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Requests passed from the network thread to a worker so far.
    pub fn handoffs(&self) -> u64 {
        self.handoffs.load(Ordering::Relaxed)
    }

    pub(crate) fn record_handoff(&self) {
        self.handoffs.fetch_add(1, Ordering::Relaxed);
    }

    pub fn execute(&self, frame: &RequestFrame) -> ResponseFrame {
        let id = frame.request_id;
        match self.run(&frame.command) {
            Ok((count, flags, body)) => ResponseFrame {
                flags,
                ..ResponseFrame::ok(id, count, body)
            },
            Err(status) => ResponseFrame::status(id, status),
        }
    }

    fn run(&self, command: &Command) -> Result<(u16, u8, Bytes), Status> {
        let empty = Ok((0, 0, Bytes::new()));
        match command {
            Command::Noop | Command::Quit => empty,
            Command::Get { key } => {
                let value = self.store.get(&key_of(key)?).ok_or(Status::NotFound)?;
                Ok((0, 0, wire::get_body(&value).map_err(|_| Status::TooLarge)?))
            }
            Command::Put { key, value, tags } => {
                let key = key_of(key)?;
                let tags = TagSet::from_tags(tags.iter().copied()).map_err(|_| Status::BadRequest)?;
                match self.store.put(key, value.clone(), tags) {
                    Ok(PutOutcome::Inserted) => empty,
                    Ok(PutOutcome::Replaced) => Ok((0, wire::FLAG_REPLACED, Bytes::new())),
                    Err(StoreError::TooLarge { .. }) => Err(Status::TooLarge),
                }
            }
            Command::Delete { key } => match self.store.delete(&key_of(key)?) {
                DeleteOutcome::Deleted => empty,
                DeleteOutcome::NotFound => Err(Status::NotFound),
            },
            Command::MGet { keys } => {
                if keys.is_empty() {
                    return Err(Status::BadRequest);
                }
                let keys = keys.iter().map(key_of).collect::<Result<Vec<_>, _>>()?;
                let results = self.store.get_many(&keys);
                let body = wire::mget_body(results.iter().map(|(_, v)| v.as_deref()))
                    .map_err(|_| Status::TooLarge)?;
                Ok((keys.len() as u16, 0, body))
            }
            Command::TagQuery { ttype, op, tvalue } => {
                let keys = self.store.query_cmp(*ttype, *op, *tvalue);
                let count = u16::try_from(keys.len()).map_err(|_| Status::TooLarge)?;
                let body = wire::keys_body(keys.iter().map(Key::as_bytes)).map_err(|_| Status::TooLarge)?;
                Ok((count, 0, body))
            }
            Command::TagExpire { ttype, op, tvalue } => {
                let n = self.store.expire_group(*ttype, *op, *tvalue);
                Ok((0, 0, wire::expire_body(u32::try_from(n).unwrap_or(u32::MAX))))
            }
            Command::Stats => {
                let stats = self.store.stats();
                let instrument = self.store.config().instrument.then(|| InstrumentCounters {
                    shared_acquisitions: stats.total.shared_acquisitions,
                    exclusive_acquisitions: stats.total.exclusive_acquisitions,
                    handoffs: self.handoffs(),
                });
                let body = StatsBody {
                    records: stats.total.records,
                    used_bytes: stats.total.used_bytes,
                    evictions: stats.total.evictions,
                    buckets: stats.buckets.len() as u32,
                    instrument,
                };
                let (body, count) = body.encode();
                Ok((count, 0, body))
            }
            Command::Unknown { .. } => Err(Status::BadRequest),
        }
    }
}

fn key_of(raw: &Bytes) -> Result<Key, Status> {
    Key::new(raw.clone()).map_err(|_| Status::BadRequest)
}
