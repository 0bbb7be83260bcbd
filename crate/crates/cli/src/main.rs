//! `adl`: train archetypal and free sparse autoencoders on activation
//! matrices, score them, and run the synthetic benchmarks.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure (divergence, undefined metric). `ADL_THREADS` caps internal
//! parallelism; the default of 1 keeps runs bit-deterministic across
//! machines regardless of core count (row-parallel products are
//! deterministic at any setting).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CommonArgs;

#[derive(Parser)]
#[command(name = "adl", version, about = "Archetypal dictionary-learning harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides out_dir in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one SAE and write the model bundle, training curve, and
    /// metrics report.
    Train(RunArgs),
    /// Train one model per seed and report pairwise dictionary stability.
    Stability(RunArgs),
    /// Run the plausibility or identifiability benchmark over a method list.
    Bench(RunArgs),
    /// Reduce an activation matrix to candidate archetypes via K-Means.
    Distill(RunArgs),
    /// Recompute the metrics report from a saved model and a data file.
    Metrics(RunArgs),
    /// Generate a synthetic dataset (planted, identifiability, or
    /// plausibility) as ADLM files plus a manifest.
    Gen(RunArgs),
    /// Convert a headerless numeric CSV into an ADLM matrix file.
    ImportCsv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::cmd_train(&common(args)),
        Command::Stability(args) => commands::cmd_stability(&common(args)),
        Command::Bench(args) => commands::cmd_bench(&common(args)),
        Command::Distill(args) => commands::cmd_distill(&common(args)),
        Command::Metrics(args) => commands::cmd_metrics(&common(args)),
        Command::Gen(args) => commands::cmd_gen(&common(args)),
        Command::ImportCsv { input, output } => commands::cmd_import_csv(input, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(commands::exit_code(&err) as u8)
        }
    }
}

fn common(args: &RunArgs) -> CommonArgs {
    CommonArgs {
        config: args.config.clone(),
        seed: args.seed,
        out: args.out.clone(),
    }
}
