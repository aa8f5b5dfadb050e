//! Client library and benchmark harness for the tagcache daemon.

mod client;
mod endpoint;
mod runner;
pub mod workload;

pub use client::{Client, ClientError};
pub use endpoint::{Endpoint, EndpointParseError};
pub use runner::{
    compare_threadless, median, percentile, preload, run_bench, run_null_bench, write_csv, BenchError, BenchReport,
    ThreadlessComparison,
};
pub use workload::{generate_dataset, Mode, Record, TagProfile, WorkloadSpec};
