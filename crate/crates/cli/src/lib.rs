//! Command-line front end: configuration, persistence and the five subcommands.

pub mod commands;
pub mod config;
pub mod io;
pub mod lab;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use bsq_core::LabError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Lab(_) | CliError::CheckFailed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bsq", version, about = "Dynamic-rescaling Boussinesq laboratory")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// N or NxM (n_sigma x n_beta).
    #[arg(long, global = true, value_parser = config::parse_resolution)]
    pub resolution: Option<(usize, usize)>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Property battery; writes verify_report.json.
    Verify,
    /// F* pack, profile residual and leading-order velocity.
    Profile,
    /// Manufactured solve and direct vs split solve for F*.
    Solve,
    /// Full simulation: CSV, snapshots and manifest.
    Run,
    /// Energy ledger of an existing run directory.
    Report {
        /// Run directory (defaults to --out-dir).
        dir: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bsq: {e}");
            e.exit_code()
        }
    }
}
