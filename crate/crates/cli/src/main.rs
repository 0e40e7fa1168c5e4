use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use barrier_es::diagnostics::{
    expected_decrease_audit, read_config, read_trace, write_config, write_trace, DecreaseReport,
    RunConfig,
};
use barrier_es::suites::{check_accuracy, run_seeds, suite_config, write_seed_traces, SuiteError};
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "barrier-es",
    version,
    about = "Constrained evolution strategy runs, benchmarks and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named benchmark over seeds 0..k.
    Bench {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Audit how often objective estimates are accurate.
    CheckAccuracy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Seed-averaged Lyapunov increments of every CSV trace in a directory.
    AuditLyapunov {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long, default_value_t = 10)]
        bucket: usize,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl ToString) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<SuiteError> for Failure {
    fn from(e: SuiteError) -> Self {
        match e {
            SuiteError::UnknownSuite(_) | SuiteError::Registry(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    read_config(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::runtime)?;
    println!("{text}");
    Ok(())
}

fn run(config: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let config = load(config)?;
    let mut runs = run_seeds(&config, &[seed])?;
    let run = runs.pop().expect("one seed");
    write_trace(&run.outcome.trace, out).map_err(Failure::runtime)?;
    info!(
        "wrote {} records to {}",
        run.outcome.trace.len(),
        out.display()
    );
    print_json(&run.summary)
}

fn bench(suite: &str, seeds: u64, out_dir: &Path) -> Result<(), Failure> {
    let config = suite_config(suite)?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let runs = run_seeds(&config, &seeds)?;
    write_seed_traces(&runs, out_dir)?;
    write_config(&config, &out_dir.join("config.json")).map_err(Failure::runtime)?;
    let summaries: Vec<_> = runs.iter().map(|r| &r.summary).collect();
    let text = serde_json::to_string_pretty(&summaries).map_err(Failure::runtime)?;
    fs::write(out_dir.join("summary.json"), &text).map_err(Failure::runtime)?;
    info!("{} traces in {}", runs.len(), out_dir.display());
    println!("{text}");
    Ok(())
}

fn accuracy(config: &Path, iters: usize, seed: u64) -> Result<(), Failure> {
    let config = load(config)?;
    let report = check_accuracy(&config, iters, seed)?;
    if !report.compliant {
        warn!(
            "99% lower bound {:.4} is below p = {}",
            report.lower_bound, report.p
        );
    }
    print_json(&report)
}

#[derive(Serialize)]
struct LyapunovSummary {
    traces: Vec<String>,
    fraction_non_positive: Option<f64>,
    #[serde(flatten)]
    report: DecreaseReport,
}

fn audit_lyapunov(dir: &Path, nu: f64, bucket: usize) -> Result<(), Failure> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Failure::Config(format!("nu must lie in (0, 1), got {nu}")));
    }
    if bucket == 0 {
        return Err(Failure::Config("bucket must be positive".into()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    let mut traces = Vec::with_capacity(paths.len());
    for path in &paths {
        traces.push(
            read_trace(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?,
        );
    }
    let report = expected_decrease_audit(&traces, nu, bucket).map_err(Failure::runtime)?;
    print_json(&LyapunovSummary {
        traces: paths.iter().map(|p| p.display().to_string()).collect(),
        fraction_non_positive: report.fraction_non_positive(),
        report,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run { config, seed, out } => run(config, *seed, out),
        Command::Bench {
            suite,
            seeds,
            out_dir,
        } => bench(suite, *seeds, out_dir),
        Command::CheckAccuracy {
            config,
            iters,
            seed,
        } => accuracy(config, *iters, *seed),
        Command::AuditLyapunov { traces, nu, bucket } => audit_lyapunov(traces, *nu, *bucket),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
