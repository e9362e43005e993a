//! Experiment configuration, the subcommands behind the `koopman` binary and
//! the suites that regenerate the benchmark tables and figures.
//!
//! Each subcommand writes into a fresh `<out>/<command>-NNNN` directory and
//! leaves a `manifest.json` and `config.toml` beside its outputs.

mod commands;
mod config;
mod manifest;
mod reproduce;
mod tasks;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;

pub use commands::{cmd_collect, cmd_control, cmd_predict, cmd_sweep, cmd_train, collect_pair, model_seed, TABLE_STEP};
pub use config::{
    BudgetKind, ControlConfig, ControlModelConfig, DataConfig, ExperimentConfig, Overrides, ReproduceConfig,
    SweepConfig,
};
pub use manifest::{content_hash, fresh_run_dir, InputRecord, Manifest, Run};
pub use reproduce::{
    cmd_reproduce, fig5, fig6, table1, table2, ControlEntry, EfficiencyCurve, ModelEntry, Suite, SweepEntry, Table1,
};
pub use tasks::{standard_task, TASK_DARE_MAX_ITER};

#[derive(Debug, Parser)]
#[command(name = "koopman", version, about = "Deep Koopman models with control")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent directory of the run directories.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// damping_pendulum, pendulum, mountaincar, cartpole or double_pendulum.
    #[arg(long, global = true)]
    pub env: Option<String>,
    /// dkuc, dkac, dkn, krbf or kdnn.
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the uniform random policy for training and test data.
    Collect,
    /// Fit a model to a training dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a model's multi-step predictions on a test dataset.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the lifted LQR controller in closed loop.
    Control {
        #[arg(long)]
        model: PathBuf,
    },
    /// Closed-loop cost over a grid of initial states.
    Sweep {
        #[arg(long)]
        model: PathBuf,
    },
    /// Regenerate a benchmark table or figure.
    Reproduce {
        #[arg(value_parser = ["table1", "table2", "fig5", "fig6"])]
        suite: String,
    },
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATASET_NOT_FOUND: i32 = 3;
pub const EXIT_MODEL_NOT_FOUND: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;
pub const EXIT_DIVERGENCE: i32 = 6;
pub const EXIT_UNSTABILIZABLE: i32 = 7;
pub const EXIT_IO: i32 = 8;
pub const EXIT_OTHER: i32 = 1;

/// Process exit code for an error category.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnknownEnv(_) => EXIT_USAGE,
        Error::NotFound { kind: "dataset", .. } => EXIT_DATASET_NOT_FOUND,
        Error::NotFound { kind: "model", .. } => EXIT_MODEL_NOT_FOUND,
        Error::NotFound { .. } => EXIT_USAGE,
        Error::Format(_) => EXIT_FORMAT,
        Error::RolloutDivergence { .. } | Error::TrainingDivergence { .. } | Error::Integration { .. } => {
            EXIT_DIVERGENCE
        }
        Error::Unstabilizable(_) | Error::UnsupportedVariant(_) => EXIT_UNSTABILIZABLE,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_OTHER,
    }
}

/// Execute a parsed command line and return the run directory.
pub fn execute(cli: Cli) -> crate::error::Result<PathBuf> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        env: cli.env,
        method: cli.method,
    };
    let config = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Collect => cmd_collect(&config),
        Command::Train { data } => cmd_train(&config, &data),
        Command::Predict { model, test } => cmd_predict(&config, &model, &test),
        Command::Control { model } => cmd_control(&config, &model),
        Command::Sweep { model } => cmd_sweep(&config, &model),
        Command::Reproduce { suite } => cmd_reproduce(&config, suite.parse()?),
    }
}

/// Parse `args`, run the command and report the outcome on stdout or
/// stderr. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
