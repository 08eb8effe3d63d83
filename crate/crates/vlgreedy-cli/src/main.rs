//! `vlgreedy`: configuration-driven experiments on variable-exponent
//! Lebesgue grids.
//!
//! Subcommands `norm`, `greedy`, `democracy`, and `verify` read a JSON
//! config, compute everything in memory, then persist artifacts atomically;
//! `report` re-reads a finished run and prints its summary. Exit codes:
//! 0 success, 2 configuration error, 3 capacity error, 4 verification
//! failure. Thread count is a throughput knob only; results are identical
//! for any `--threads` value because work is generated sequentially and
//! collected in deterministic order.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Capacity(String),
    #[error("verification failed: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Capacity(_) => 3,
            CliError::VerifyFailed(_) => 4,
        }
    }
}

/// Core errors reaching the CLI are either capacity shortfalls (the grid
/// cannot host what the config asked for) or invalid requests; everything
/// else never leaves the library.
pub fn core_err(e: vlgreedy_core::Error) -> CliError {
    match e {
        vlgreedy_core::Error::Capacity { .. } => CliError::Capacity(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub fn io_err(context: &str, e: std::io::Error) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

#[derive(Parser)]
#[command(
    name = "vlgreedy",
    version,
    about = "Variable-exponent norms, greedy approximation, and democracy experiments on dyadic grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-scale characteristic-norm diagnostics of the exponent field
    Norm(RunArgs),
    /// Greedy versus best-subset error profiles on seeded functions
    Greedy(RunArgs),
    /// Democracy growth-exponent estimation over family strategies
    Democracy(RunArgs),
    /// Run every verification battery and emit per-check results
    Verify(RunArgs),
    /// Summarize the artifacts of a previous run
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for randomized experiments
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; a throughput hint that never changes results
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding the artifacts of a previous run
    #[arg(long)]
    out: PathBuf,
}

fn dispatch(kind: &'static str, args: RunArgs) -> Result<(), CliError> {
    if let Some(k) = args.threads {
        // may fail if a pool already exists; irrelevant, results never
        // depend on the pool size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let raw = config::load_config(&args.config)?;
    let prep = config::prepare(raw, args.seed, args.out, kind)?;
    experiments::run(&prep)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Norm(args) => dispatch("norm", args),
        Command::Greedy(args) => dispatch("greedy", args),
        Command::Democracy(args) => dispatch("democracy", args),
        Command::Verify(args) => dispatch("verify", args),
        Command::Report(args) => experiments::run_report(&args.out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
