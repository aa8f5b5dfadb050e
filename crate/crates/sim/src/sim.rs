//! The event loop: a task generator feeding a bounded queue, worker
//! contexts pulling tasks, and one modeled lock per bucket.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::rwlock::{LockKind, RwLockModel};

/// A wait shorter than this fraction of the mean hold time counts as fast.
pub const FAST_WAIT_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub workers: usize,
    pub buckets: usize,
    /// Probability that a task takes the shared lock.
    pub read_ratio: f64,
    /// Mean of the exponential lock hold time, in simulated time units.
    pub mean_hold_time: f64,
    /// Mean of an exponential processing phase before the lock is
    /// requested; zero means a task holds its lock for its whole service.
    pub unlocked_time: f64,
    /// Tasks waiting beyond this many are dropped.
    pub queue_capacity: usize,
    /// Poisson task arrivals per simulated time unit.
    pub arrival_rate: f64,
    /// Tasks generated before the run stops.
    pub total_tasks: u64,
    pub seed: u64,
}

pub const DEFAULT_ARRIVAL_RATE: f64 = 60.0;
pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            workers: 8,
            buckets: 256,
            read_ratio: 0.9,
            mean_hold_time: 1.0,
            unlocked_time: 0.0,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            arrival_rate: DEFAULT_ARRIVAL_RATE,
            total_tasks: 1_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimConfigError {
    #[error("workers and buckets must be at least 1")]
    Empty,
    #[error("read ratio {0} outside [0, 1]")]
    ReadRatio(f64),
    #[error("timing parameters must be finite, and hold time and arrival rate positive")]
    Timing,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        if self.workers == 0 || self.buckets == 0 {
            return Err(SimConfigError::Empty);
        }
        if !(0.0..=1.0).contains(&self.read_ratio) {
            return Err(SimConfigError::ReadRatio(self.read_ratio));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.mean_hold_time) || !positive(self.arrival_rate) || !(self.unlocked_time >= 0.0 && self.unlocked_time.is_finite()) {
            return Err(SimConfigError::Timing);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub config: SimConfig,
    pub fast_shared_pct: f64,
    pub fast_exclusive_pct: f64,
    pub shared_acquisitions: u64,
    pub exclusive_acquisitions: u64,
    pub generated_tasks: u64,
    pub completed_tasks: u64,
    pub dropped_tasks: u64,
    /// Time-weighted mean number of tasks waiting in the queue.
    pub mean_queue_length: f64,
    /// Simulated time at which the last task completed.
    pub end_time: f64,
}

#[derive(Debug, Clone, Copy)]
struct Time(f64);

impl PartialEq for Time {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Time {}
impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival,
    Ready { worker: usize },
    Release { worker: usize },
}

/// A worker waiting on a bucket lock since `since`.
#[derive(Debug, Clone, Copy)]
struct Waiter {
    worker: usize,
    since: f64,
}

#[derive(Debug, Clone, Copy)]
struct Holding {
    bucket: usize,
    kind: LockKind,
}

struct Tally {
    acquisitions: u64,
    fast: u64,
}

impl Tally {
    fn pct(&self) -> f64 {
        if self.acquisitions == 0 {
            100.0
        } else {
            100.0 * self.fast as f64 / self.acquisitions as f64
        }
    }
}

struct Simulation {
    config: SimConfig,
    rng: ChaCha8Rng,
    hold: Exp<f64>,
    unlocked: Option<Exp<f64>>,
    arrivals: Exp<f64>,
    events: BinaryHeap<Reverse<(Time, u64, Event)>>,
    event_seq: u64,
    locks: Vec<RwLockModel<Waiter>>,
    holding: Vec<Option<Holding>>,
    idle: Vec<usize>,
    queue: usize,
    queue_area: f64,
    now: f64,
    generated: u64,
    completed: u64,
    dropped: u64,
    shared: Tally,
    exclusive: Tally,
    granted: Vec<(Waiter, LockKind)>,
}

impl Simulation {
    fn new(config: SimConfig) -> Simulation {
        Simulation {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            hold: Exp::new(1.0 / config.mean_hold_time).expect("positive hold time"),
            unlocked: (config.unlocked_time > 0.0).then(|| Exp::new(1.0 / config.unlocked_time).expect("positive")),
            arrivals: Exp::new(config.arrival_rate).expect("positive arrival rate"),
            events: BinaryHeap::new(),
            event_seq: 0,
            locks: (0..config.buckets).map(|_| RwLockModel::new()).collect(),
            holding: vec![None; config.workers],
            idle: (0..config.workers).rev().collect(),
            queue: 0,
            queue_area: 0.0,
            now: 0.0,
            generated: 0,
            completed: 0,
            dropped: 0,
            shared: Tally { acquisitions: 0, fast: 0 },
            exclusive: Tally { acquisitions: 0, fast: 0 },
            granted: Vec::new(),
            config,
        }
    }

    fn schedule(&mut self, at: f64, event: Event) {
        self.event_seq += 1;
        self.events.push(Reverse((Time(at), self.event_seq, event)));
    }

    fn run(mut self) -> SimReport {
        if self.config.total_tasks > 0 {
            let first = self.arrivals.sample(&mut self.rng);
            self.schedule(first, Event::Arrival);
        }
        while let Some(Reverse((Time(at), _, event))) = self.events.pop() {
            self.queue_area += self.queue as f64 * (at - self.now);
            self.now = at;
            match event {
                Event::Arrival => self.arrive(),
                Event::Ready { worker } => self.request_lock(worker),
                Event::Release { worker } => self.release(worker),
            }
        }
        SimReport {
            fast_shared_pct: self.shared.pct(),
            fast_exclusive_pct: self.exclusive.pct(),
            shared_acquisitions: self.shared.acquisitions,
            exclusive_acquisitions: self.exclusive.acquisitions,
            generated_tasks: self.generated,
            completed_tasks: self.completed,
            dropped_tasks: self.dropped,
            mean_queue_length: if self.now > 0.0 { self.queue_area / self.now } else { 0.0 },
            end_time: self.now,
            config: self.config,
        }
    }

    fn arrive(&mut self) {
        self.generated += 1;
        if let Some(worker) = self.idle.pop() {
            self.start_task(worker);
        } else if self.queue < self.config.queue_capacity {
            self.queue += 1;
        } else {
            self.dropped += 1;
        }
        if self.generated < self.config.total_tasks {
            let next = self.now + self.arrivals.sample(&mut self.rng);
            self.schedule(next, Event::Arrival);
        }
    }

    fn start_task(&mut self, worker: usize) {
        match &self.unlocked {
            Some(phase) => {
                let ready = self.now + phase.sample(&mut self.rng);
                self.schedule(ready, Event::Ready { worker });
            }
            None => self.request_lock(worker),
        }
    }

    fn request_lock(&mut self, worker: usize) {
        let bucket = self.rng.random_range(0..self.config.buckets);
        let kind = if self.rng.random_bool(self.config.read_ratio) {
            LockKind::Shared
        } else {
            LockKind::Exclusive
        };
        self.holding[worker] = Some(Holding { bucket, kind });
        let waiter = Waiter { worker, since: self.now };
        if self.locks[bucket].request(kind, waiter) {
            self.acquired(waiter, kind);
        }
        debug_assert_eq!(self.locks[bucket].check(), Ok(()));
    }

    fn acquired(&mut self, waiter: Waiter, kind: LockKind) {
        let fast = self.now - waiter.since < FAST_WAIT_FRACTION * self.config.mean_hold_time;
        let tally = match kind {
            LockKind::Shared => &mut self.shared,
            LockKind::Exclusive => &mut self.exclusive,
        };
        tally.acquisitions += 1;
        tally.fast += u64::from(fast);
        let done = self.now + self.hold.sample(&mut self.rng);
        self.schedule(done, Event::Release { worker: waiter.worker });
    }

    fn release(&mut self, worker: usize) {
        let Holding { bucket, kind } = self.holding[worker].take().expect("releasing worker holds a lock");
        let mut granted = std::mem::take(&mut self.granted);
        self.locks[bucket].release(kind, &mut granted);
        debug_assert_eq!(self.locks[bucket].check(), Ok(()));
        for &(waiter, kind) in &granted {
            self.acquired(waiter, kind);
        }
        granted.clear();
        self.granted = granted;
        self.completed += 1;
        if self.queue > 0 {
            self.queue -= 1;
            self.start_task(worker);
        } else {
            self.idle.push(worker);
        }
    }
}

/// Runs one configuration to completion. The same configuration always
/// produces the same report.
pub fn simulate(config: &SimConfig) -> Result<SimReport, SimConfigError> {
    config.validate()?;
    Ok(Simulation::new(config.clone()).run())
}
