//! A shared-exclusive lock with writer priority, as a pure state machine.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockKind {
    Shared,
    Exclusive,
}

/// Readers are admitted only while no writer holds or waits. Writers are
/// admitted in arrival order once the lock is free. When the last holder
/// leaves, a waiting writer goes first; otherwise every waiting reader is
/// admitted together.
#[derive(Debug, Clone)]
pub struct RwLockModel<T> {
    readers: u32,
    writer: bool,
    waiting_writers: VecDeque<T>,
    waiting_readers: Vec<T>,
}

impl<T> Default for RwLockModel<T> {
    fn default() -> Self {
        RwLockModel {
            readers: 0,
            writer: false,
            waiting_writers: VecDeque::new(),
            waiting_readers: Vec::new(),
        }
    }
}

impl<T> RwLockModel<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active_readers(&self) -> u32 {
        self.readers
    }

    pub fn writer_holds(&self) -> bool {
        self.writer
    }

    pub fn waiting_writers(&self) -> usize {
        self.waiting_writers.len()
    }

    pub fn waiting_readers(&self) -> usize {
        self.waiting_readers.len()
    }

    /// Returns true when the lock is granted at once; otherwise `waiter`
    /// is queued and handed back by a later release.
    pub fn request(&mut self, kind: LockKind, waiter: T) -> bool {
        match kind {
            LockKind::Shared if !self.writer && self.waiting_writers.is_empty() => {
                self.readers += 1;
                true
            }
            LockKind::Shared => {
                self.waiting_readers.push(waiter);
                false
            }
            LockKind::Exclusive if !self.writer && self.readers == 0 && self.waiting_writers.is_empty() => {
                self.writer = true;
                true
            }
            LockKind::Exclusive => {
                self.waiting_writers.push_back(waiter);
                false
            }
        }
    }

    /// Releases one hold of `kind` and appends the waiters now admitted.
    pub fn release(&mut self, kind: LockKind, granted: &mut Vec<(T, LockKind)>) {
        match kind {
            LockKind::Shared => {
                assert!(self.readers > 0 && !self.writer, "shared release without a reader");
                self.readers -= 1;
            }
            LockKind::Exclusive => {
                assert!(self.writer && self.readers == 0, "exclusive release without the writer");
                self.writer = false;
            }
        }
        if self.readers > 0 {
            return;
        }
        if let Some(w) = self.waiting_writers.pop_front() {
            self.writer = true;
            granted.push((w, LockKind::Exclusive));
        } else {
            self.readers += self.waiting_readers.len() as u32;
            granted.extend(self.waiting_readers.drain(..).map(|r| (r, LockKind::Shared)));
        }
    }

    /// Checks the safety and priority rules; used by tests and debug builds.
    pub fn check(&self) -> Result<(), String> {
        if self.writer && self.readers > 0 {
            return Err(format!("writer holds alongside {} readers", self.readers));
        }
        if !self.writer && self.readers == 0 && !self.waiting_writers.is_empty() {
            return Err("free lock with a waiting writer".into());
        }
        if !self.writer && self.waiting_writers.is_empty() && !self.waiting_readers.is_empty() {
            return Err("readers wait with no writer present".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn waiting_writer_blocks_new_readers() {
        let mut l = RwLockModel::new();
        assert!(l.request(LockKind::Shared, 1));
        assert!(!l.request(LockKind::Exclusive, 2));
        assert!(!l.request(LockKind::Shared, 3));
        let mut g = Vec::new();
        l.release(LockKind::Shared, &mut g);
        assert_eq!(g, vec![(2, LockKind::Exclusive)]);
        g.clear();
        l.release(LockKind::Exclusive, &mut g);
        assert_eq!(g, vec![(3, LockKind::Shared)]);
    }

    #[test]
    fn writers_in_fifo_order() {
        let mut l = RwLockModel::new();
        assert!(l.request(LockKind::Exclusive, 0));
        for w in 1..5 {
            assert!(!l.request(LockKind::Exclusive, w));
        }
        let mut order = Vec::new();
        let mut g = Vec::new();
        for _ in 0..4 {
            g.clear();
            l.release(LockKind::Exclusive, &mut g);
            order.push(g[0].0);
        }
        assert_eq!(order, vec![1, 2, 3, 4]);
    }

    #[derive(Debug, Clone)]
    enum Step {
        Request(bool),
        Release(usize),
    }

    proptest! {
        #[test]
        fn never_unsafe(steps in prop::collection::vec(
            prop_oneof![any::<bool>().prop_map(Step::Request), (0usize..16).prop_map(Step::Release)],
            1..200,
        )) {
            let mut l = RwLockModel::new();
            let mut holders: Vec<(u32, LockKind)> = Vec::new();
            let mut next = 0u32;
            let mut granted = Vec::new();
            for step in steps {
                match step {
                    Step::Request(exclusive) => {
                        let kind = if exclusive { LockKind::Exclusive } else { LockKind::Shared };
                        let writers_waiting = l.waiting_writers() > 0;
                        if l.request(kind, next) {
                            prop_assert!(!(kind == LockKind::Shared && writers_waiting));
                            holders.push((next, kind));
                        }
                        next += 1;
                    }
                    Step::Release(i) if !holders.is_empty() => {
                        let (_, kind) = holders.remove(i % holders.len());
                        granted.clear();
                        l.release(kind, &mut granted);
                        holders.extend(granted.iter().copied());
                    }
                    Step::Release(_) => {}
                }
                prop_assert_eq!(l.check(), Ok(()));
                let writers = holders.iter().filter(|h| h.1 == LockKind::Exclusive).count();
                prop_assert!(writers <= 1);
                prop_assert!(writers == 0 || holders.len() == 1);
                prop_assert_eq!(holders.len() - writers, l.active_readers() as usize);
            }
        }
    }
}
