//! Shared-exclusive lock with optional acquisition counters.
//!
//! Backed by `parking_lot::RwLock`, whose fair policy parks new readers
//! once a writer is queued, so a steady stream of readers cannot starve a
//! writer.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{RwLockReadGuard, RwLockWriteGuard};

/// Acquisition counters, shared by every lock that reports into them.
#[derive(Debug, Default)]
pub struct LockCounters {
    shared: AtomicU64,
    exclusive: AtomicU64,
}

impl LockCounters {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn shared(&self) -> u64 {
        self.shared.load(Ordering::Relaxed)
    }

    pub fn exclusive(&self) -> u64 {
        self.exclusive.load(Ordering::Relaxed)
    }
}

pub struct RwLock<T> {
    inner: parking_lot::RwLock<T>,
    counters: Option<Arc<LockCounters>>,
}

impl<T> RwLock<T> {
    /// Uninstrumented lock.
    pub fn new(value: T) -> Self {
        Self::with_counters(value, None)
    }

    pub fn with_counters(value: T, counters: Option<Arc<LockCounters>>) -> Self {
        RwLock {
            inner: parking_lot::RwLock::new(value),
            counters,
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, T> {
        let guard = self.inner.read();
        if let Some(c) = &self.counters {
            c.shared.fetch_add(1, Ordering::Relaxed);
        }
        guard
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, T> {
        let guard = self.inner.write();
        if let Some(c) = &self.counters {
            c.exclusive.fetch_add(1, Ordering::Relaxed);
        }
        guard
    }

    pub fn counters(&self) -> Option<&Arc<LockCounters>> {
        self.counters.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;
    use std::time::Duration;

    #[test]
    fn counts_by_kind() {
        let counters = LockCounters::new();
        let lock = RwLock::with_counters(0u32, Some(counters.clone()));
        drop(lock.read());
        drop(lock.read());
        *lock.write() += 1;
        assert_eq!(counters.shared(), 2);
        assert_eq!(counters.exclusive(), 1);
    }

    #[test]
    fn uninstrumented_has_no_counters() {
        let lock = RwLock::new(());
        drop(lock.write());
        assert!(lock.counters().is_none());
    }

    #[test]
    fn readers_share() {
        let lock = Arc::new(RwLock::new(5));
        let a = lock.read();
        let other = Arc::clone(&lock);
        let seen = thread::spawn(move || *other.read()).join().unwrap();
        assert_eq!(seen, *a);
    }

    #[test]
    fn waiting_writer_blocks_new_readers() {
        let lock = Arc::new(RwLock::new(0u32));
        let first = lock.read();

        let w = Arc::clone(&lock);
        let writer = thread::spawn(move || {
            *w.write() = 1;
        });
        // Give the writer time to queue behind the held read guard.
        thread::sleep(Duration::from_millis(100));

        let r = Arc::clone(&lock);
        let reader = thread::spawn(move || *r.read());
        thread::sleep(Duration::from_millis(100));
        drop(first);

        writer.join().unwrap();
        // The late reader must observe the write: it queued behind the writer.
        assert_eq!(reader.join().unwrap(), 1);
    }
}
