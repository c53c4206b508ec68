//! `semshift`: prepare corpora, aggregate contextual embeddings into word
//! representations, and score, inspect and evaluate semantic shift.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{config_error, Failure, RunConfig};
use output::Format;

#[derive(Parser)]
#[command(name = "semshift", version, about = "Diachronic semantic shift detection from contextual embeddings")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON run-config with flat keys; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving output files (default: current directory)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Report format; `jsonl` also selects the JSON-lines stream codec
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Maximum worker threads
    #[arg(long, global = true)]
    threads: Option<u64>,
    /// Seed for shuffling, permutation tests and synthetic streams
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat words missing from stores as errors
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    strict: Option<bool>,
}

/// Global settings after merging flags with the config file.
pub struct Globals {
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub strict: bool,
}

const DEFAULT_SEED: u64 = 42;

#[derive(Subcommand)]
enum Command {
    /// Split a corpus into periods and write a tokenized sequence manifest
    Prepare(commands::PrepareArgs),
    /// Average embedding streams into per-period and global word representations
    Aggregate(commands::AggregateArgs),
    /// Rank words by cosine distance between two periods
    Shift(commands::ShiftArgs),
    /// Nearest neighbors of target words, optionally ranked by meaning change
    Neighbors(commands::NeighborsArgs),
    /// Target-seed similarity across periods
    Trajectory(commands::TrajectoryArgs),
    /// Correlate shift distances with a gold standard
    Eval(commands::EvalArgs),
    /// Generate a synthetic embedding stream with planted shifts
    Synth(commands::SynthArgs),
}

fn resolve_globals(args: GlobalArgs, cfg: &RunConfig) -> Result<Globals, Failure> {
    let format = match (args.format, cfg.string(None, "format")?) {
        (Some(f), _) => f,
        (None, Some(s)) => Format::parse(&s).ok_or_else(|| config_error(format!("unknown format {s:?}")))?,
        (None, None) => Format::default(),
    };
    if let Some(threads) = cfg.u64(args.threads, "threads")? {
        if threads == 0 {
            return Err(config_error("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads as usize)
            .build_global()
            .map_err(Failure::runtime)?;
    }
    Ok(Globals {
        out_dir: cfg.path(args.out_dir, "out_dir")?.unwrap_or_else(|| PathBuf::from(".")),
        format,
        seed: cfg.u64(args.seed, "seed")?.unwrap_or(DEFAULT_SEED),
        strict: cfg.bool(args.strict, "strict")?.unwrap_or(false),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let globals = resolve_globals(cli.global, &cfg)?;
    match cli.command {
        Command::Prepare(a) => commands::prepare(a, &cfg, &globals),
        Command::Aggregate(a) => commands::aggregate(a, &cfg, &globals),
        Command::Shift(a) => commands::shift(a, &cfg, &globals),
        Command::Neighbors(a) => commands::neighbors(a, &cfg, &globals),
        Command::Trajectory(a) => commands::trajectory(a, &cfg, &globals),
        Command::Eval(a) => commands::eval(a, &cfg, &globals),
        Command::Synth(a) => commands::synth(a, &cfg, &globals),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let kind = if failure.code == config::EXIT_CONFIG { "config error" } else { "error" };
            eprintln!("semshift: {kind}: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
