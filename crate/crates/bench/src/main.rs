use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use log::{error, info};
use tagcache_bench::{
    compare_threadless, generate_dataset, preload, run_bench, write_csv, BenchError, BenchReport, Endpoint, Mode,
    WorkloadSpec,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Reads and overwrites of a preloaded dataset.
    Mixed,
    /// NOOP requests only.
    Null,
    /// Start in-process servers with 0 and 1 workers and compare NOOP throughput.
    NullCompare,
}

/// Load generator for the tagcache daemon.
#[derive(Debug, Parser)]
#[command(name = "tagcache-bench", version)]
struct Args {
    /// Server address: tcp:HOST:PORT or unix:PATH. Ignored by null-compare.
    #[arg(long, default_value = "tcp:127.0.0.1:9180")]
    endpoint: Endpoint,
    #[arg(long, default_value_t = 10)]
    clients: usize,
    /// Measurement duration in seconds.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 30_000)]
    records: usize,
    #[arg(long, default_value_t = 0.9)]
    read_ratio: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Mixed)]
    mode: ModeArg,
    /// Requests each client keeps in flight.
    #[arg(long, default_value_t = 1)]
    pipeline: usize,
    /// Write results as CSV; rows are appended when the file exists.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Skip the preload phase of the mixed workload.
    #[arg(long)]
    no_load: bool,
    /// Check reads against a shadow model; clients then use disjoint keys.
    #[arg(long)]
    verify: bool,
    /// Runs per configuration for null-compare.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Free-form label stored in the CSV row.
    #[arg(long, default_value = "")]
    label: String,
}

fn print(r: &BenchReport) {
    println!(
        "{:<12} clients={:<3} pipeline={:<3} ops={:<9} ops/s={:<10.0} p50={:.1}us p95={:.1}us p99={:.1}us errors={} mismatches={}",
        if r.label.is_empty() { format!("{:?}", r.mode).to_lowercase() } else { r.label.clone() },
        r.clients,
        r.pipeline,
        r.ops,
        r.ops_per_second,
        r.p50_us,
        r.p95_us,
        r.p99_us,
        r.error_count(),
        r.mismatches
    );
}

fn run(args: Args) -> Result<Vec<BenchReport>, BenchError> {
    let duration = Duration::from_secs_f64(args.duration);
    if let ModeArg::NullCompare = args.mode {
        let cmp = compare_threadless(args.clients, duration, args.runs.max(1), args.pipeline)?;
        for r in cmp.threadless.iter().chain(&cmp.one_worker) {
            print(r);
        }
        println!(
            "median ops/s: threadless {:.0}, one worker {:.0}, ratio {:.3}",
            cmp.median_threadless(),
            cmp.median_one_worker(),
            cmp.ratio()
        );
        return Ok(cmp.median_rows());
    }
    let spec = WorkloadSpec {
        mode: match args.mode {
            ModeArg::Null => Mode::Null,
            _ => Mode::Mixed,
        },
        record_count: args.records,
        read_ratio: args.read_ratio,
        clients: args.clients,
        duration,
        seed: args.seed,
        pipeline: args.pipeline,
        verify: args.verify,
        ..WorkloadSpec::default()
    };
    spec.validate().map_err(BenchError::Config)?;
    if spec.mode == Mode::Mixed && !args.no_load {
        info!("preloading {} records into {}", spec.record_count, args.endpoint);
        preload(&args.endpoint, &generate_dataset(&spec)).map_err(BenchError::Preload)?;
    }
    let mut report = run_bench(&spec, &args.endpoint)?;
    report.label = args.label;
    print(&report);
    Ok(vec![report])
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let csv = args.csv.clone();
    match run(args) {
        Ok(reports) => {
            if let Some(path) = csv {
                if let Err(e) = write_csv(&path, &reports, true) {
                    error!("cannot write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            ExitCode::SUCCESS
        }
        Err(BenchError::Client { client, source, partial }) => {
            error!("client {client} failed: {source}");
            print(&partial);
            ExitCode::FAILURE
        }
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
