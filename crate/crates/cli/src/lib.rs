//! Command-line driver for `mfg-core`: solve a configured problem, verify an
//! archived solution, sweep a parameter, export tables.
//!
//! Exit codes: 0 success, 1 invalid input (configuration, archive, usage),
//! 2 the solver did not converge, 3 a verification threshold was exceeded.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mfg", version, about = "Spectral fixed-point solver for mean field games on the torus")]
pub struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned human-readable columns on stdout, tab-separated files on disk.
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the configured problem and archive the solution.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "MFG_OUTPUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Recompute residuals and audits of an archive against its thresholds.
    Verify {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, env = "MFG_OUTPUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Solve once per sweep value (or along an ε continuation branch).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "MFG_OUTPUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Write one quantity of an archive as delimited text.
    Export {
        #[arg(long)]
        archive: PathBuf,
        /// One of u, m, decay, norms, u_mean.
        #[arg(long)]
        field: String,
        /// Physical samples per axis for u and m.
        #[arg(long, default_value_t = 32)]
        points: usize,
        #[arg(long, env = "MFG_OUTPUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Solve { config, out, .. } => commands::cmd_solve(&config, out.as_deref()).map(drop),
        Command::Verify { archive, out, .. } => commands::cmd_verify(&archive, out.as_deref()).map(drop),
        Command::Sweep { config, out, .. } => commands::cmd_sweep(&config, out.as_deref()).map(drop),
        Command::Export {
            archive,
            field,
            points,
            out,
            ..
        } => commands::cmd_export(&archive, &field, points, out.as_deref()).map(drop),
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
