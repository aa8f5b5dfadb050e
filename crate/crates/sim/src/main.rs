use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tagcache_sim::{
    default_buckets, sweep, write_csv, SimConfig, SweepSpec, DEFAULT_ARRIVAL_RATE, DEFAULT_QUEUE_CAPACITY,
    DEFAULT_READ_RATIOS, DEFAULT_WORKERS,
};

/// Sweeps the bucket-lock contention model and writes one CSV row per
/// configuration.
#[derive(Debug, Parser)]
#[command(name = "tagcache-sim", version)]
struct Args {
    /// Worker counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WORKERS)]
    workers: Vec<usize>,
    /// Bucket counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = default_buckets())]
    buckets: Vec<usize>,
    /// Read ratios in [0, 1], comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_READ_RATIOS)]
    read_ratios: Vec<f64>,
    /// Tasks generated per configuration.
    #[arg(long, default_value_t = 1_000_000)]
    tasks: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Task arrivals per mean hold time.
    #[arg(long, default_value_t = DEFAULT_ARRIVAL_RATE)]
    arrival_rate: f64,
    /// Mean processing time a task spends outside its bucket lock.
    #[arg(long, default_value_t = 0.0)]
    unlocked_time: f64,
    /// Waiting tasks beyond this are dropped.
    #[arg(long, default_value_t = DEFAULT_QUEUE_CAPACITY)]
    queue_capacity: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.workers.is_empty() || args.buckets.is_empty() || args.read_ratios.is_empty() {
        eprintln!("worker, bucket and read-ratio lists must be nonempty");
        return ExitCode::FAILURE;
    }
    let spec = SweepSpec {
        workers: args.workers,
        buckets: args.buckets,
        read_ratios: args.read_ratios,
        base: SimConfig {
            total_tasks: args.tasks,
            seed: args.seed,
            arrival_rate: args.arrival_rate,
            queue_capacity: args.queue_capacity,
            unlocked_time: args.unlocked_time,
            ..SimConfig::default()
        },
    };
    let reports = match sweep(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let written = match &args.csv {
        Some(path) => File::create(path).map_err(csv::Error::from).and_then(|f| write_csv(f, &reports)),
        None => write_csv(std::io::stdout().lock(), &reports),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cannot write CSV: {e}");
            ExitCode::FAILURE
        }
    }
}
