//! `popdyn`: runs evolutionary-dynamics experiments described by a JSON config.
//!
//! Exit status: 0 on success, 1 on configuration or validation errors, 2 when
//! the time integration fails numerically.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Core(#[from] popdyn_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        CliError::Invalid {
            key,
            reason: reason.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "popdyn", version, about = "Evolutionary dynamics on continuous strategy spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the dynamics and write trajectory, diagnostics and summary files.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Check game and protocol properties listed under `verify` in the config.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured experiment on a sequence of grid sizes.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Worker threads for the independent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Grid sizes, e.g. `25,50,100`; overrides `refine.ns`.
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let ctx = commands::Context::new(&common.config, common.out, common.seed)?;
            commands::simulate(&ctx)
        }
        Command::Verify { common } => {
            let ctx = commands::Context::new(&common.config, common.out, common.seed)?;
            commands::verify(&ctx)
        }
        Command::Refine { common, jobs, ns } => {
            let ctx = commands::Context::new(&common.config, common.out, common.seed)?;
            commands::refine(&ctx, jobs, ns)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
