//! Discrete-event model of bucket lock contention: how often a worker gets
//! its bucket lock without a significant wait, across worker counts, bucket
//! counts and read ratios.

mod rwlock;
mod sim;
mod sweep;

pub use rwlock::{LockKind, RwLockModel};
pub use sim::{
    simulate, SimConfig, SimConfigError, SimReport, DEFAULT_ARRIVAL_RATE, DEFAULT_QUEUE_CAPACITY, FAST_WAIT_FRACTION,
};
pub use sweep::{default_buckets, sweep, write_csv, SweepSpec, DEFAULT_READ_RATIOS, DEFAULT_WORKERS};
