//! The `xai` command line: train models, explain their predictions, benchmark
//! explainers against each other and run checkpoint diagnostics.
//!
//! Every command writes its artifacts to a run directory named after a hash
//! of its configuration, so identical invocations land in the same place.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
mod error;
mod inputs;
mod run;

pub use commands::bench::BenchArgs;
pub use commands::diagnose::DiagnoseArgs;
pub use commands::explain::ExplainArgs;
pub use commands::train::TrainArgs;
pub use error::{CliError, EXIT_RUNTIME, EXIT_USAGE};
pub use inputs::{DataArgs, ModelArgs, TrainingArgs};
pub use run::{RunContext, TOOL_NAME};

#[derive(Debug, Parser)]
#[command(name = "xai", version, about = "Interpretable models and explainer diagnostics")]
pub struct Cli {
    /// Directory under which run directories are created.
    #[arg(long, global = true, env = "XAI_OUT_DIR", default_value = "runs")]
    pub out_root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and store its checkpoint.
    Train(TrainArgs),
    /// Explain rows of a CSV with one method.
    Explain(ExplainArgs),
    /// Compare explainers on agreement, stability, fidelity and latency.
    Bench(BenchArgs),
    /// Train with periodic snapshots scored on probe datasets.
    Diagnose(DiagnoseArgs),
}

/// What a finished command hands back to `main`.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub run_dir: PathBuf,
    /// Text for standard output.
    pub stdout: String,
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Train(args) => commands::train::run(args, &cli.out_root),
        Command::Explain(args) => commands::explain::run(args, &cli.out_root),
        Command::Bench(args) => commands::bench::run(args, &cli.out_root),
        Command::Diagnose(args) => commands::diagnose::run(args, &cli.out_root),
    }
}
