//! Config-driven experiment runner for unadjusted Langevin sampling: bias
//! brackets across dimension, coupling-gap estimates, multi-step theory
//! bounds, first-order bias slopes, and the rotated-mixture counterexample.
//! Each subcommand reads one JSON config and writes `results.csv`,
//! `summary.json`, and `plots/*.svg` into the output directory.

mod config;
mod output;
mod plot;
mod runners;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{CliError, ExperimentConfig};
use output::OutPaths;

#[derive(Parser)]
#[command(
    name = "langevin-deloc",
    version,
    about = "Sampling-bias experiments for the unadjusted Langevin chain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bracket the stationary max-norm bias across dimensions and steps.
    BiasScan(RunArgs),
    /// Rotated-mixture family whose bias concentrates on one coordinate.
    NegativeExample(RunArgs),
    /// Multi-step bias bound, feasibility curve, and propagator check.
    TheoryBounds(RunArgs),
    /// Coupling-gap moments and the Gaussian distance bracket at one point.
    CouplingEstimate(RunArgs),
    /// One sampler run with per-coordinate moment summaries.
    RunChain(RunArgs),
    /// First-order bias slopes, step-size regression, and K-scaling.
    AsymptoticCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; its `experiment` field must match the
    /// subcommand.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out_dir`, default `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points; defaults to the rayon heuristic.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::BiasScan(a) => ("bias_scan", a),
        Command::NegativeExample(a) => ("negative_example", a),
        Command::TheoryBounds(a) => ("theory_bounds", a),
        Command::CouplingEstimate(a) => ("coupling_estimate", a),
        Command::RunChain(a) => ("run_chain", a),
        Command::AsymptoticCheck(a) => ("asymptotic_check", a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(kind: &str, args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = config::load(&args.config)?;
    if cfg.kind() != kind {
        return Err(CliError::Config(format!(
            "config is for experiment {:?}, but the {} subcommand was invoked (expected {kind:?})",
            cfg.kind(),
            kind.replace('_', "-"),
        )));
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure {n} threads: {e}")))?;
    }
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.out_dir().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = OutPaths::create(&dir)?;
    let echo = cfg.echo();

    // timing goes to stderr only; the emitted files stay byte-deterministic
    let start = Instant::now();
    let result = match &cfg {
        ExperimentConfig::BiasScan(c) => runners::bias_scan::run(c, echo, &out),
        ExperimentConfig::NegativeExample(c) => runners::negative::run(c, echo, &out),
        ExperimentConfig::TheoryBounds(c) => runners::theory::run(c, echo, &out),
        ExperimentConfig::CouplingEstimate(c) => runners::coupling::run(c, echo, &out),
        ExperimentConfig::RunChain(c) => runners::chain::run(c, echo, &out),
        ExperimentConfig::AsymptoticCheck(c) => runners::asymptotic::run(c, echo, &out),
    };
    if result.is_ok() {
        eprintln!(
            "{kind} (seed {}): wrote {} in {:.1}s",
            cfg.seed(),
            dir.display(),
            start.elapsed().as_secs_f64()
        );
    }
    result
}
