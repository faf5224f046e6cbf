//! Front end for the `slablu` binary: `solve`, `bench` and `verify`.
//!
//! Exit codes: `0` success, `1` configuration error (nothing is written),
//! `2` solver or output error, `3` failed verification.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{Format, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[from] slablu::SlabError),
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
    #[error("verification failed: {}", .0.join(", "))]
    Verify(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) | CliError::Output(_) => 2,
            CliError::Verify(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slablu", version, about = "Two-level sparse direct solver for five-point problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factor and solve one problem and write its report.
    Solve(RunArgs),
    /// Run a sweep of grid sizes, appending one report row per run.
    Bench(RunArgs),
    /// Run the built-in correctness checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write the fully resolved config to this path.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            output: self.output.clone(),
            format: self.format,
            seed: self.seed,
            threads: self.threads,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Small grids, one slab width per check (default).
    #[arg(long, conflicts_with = "full")]
    pub quick: bool,
    /// Larger grids and the full rank sweep.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the check outcomes to this path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Flip the sign of the Schur correction to exercise the checks.
    #[arg(long, hide = true)]
    pub inject_sign_fault: bool,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Bench(a) => commands::bench(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("slablu: {e}");
            e.exit_code()
        }
    }
}
