//! `aradon`: forward projection, range checking and reconstruction for the
//! attenuated Radon transform on convex domains.
//!
//! Exit codes: 0 consistent or success, 1 data fail the range test, 2 usage or
//! input format problems, 3 numerical failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "aradon", version, about = "Range test and inversion for the attenuated Radon transform")]
struct Cli {
    /// JSON run configuration; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Integrating-factor file reused when it matches the configuration.
    #[arg(long, global = true)]
    factors_cache: Option<PathBuf>,
    /// Include the configured attenuation.
    #[arg(long, global = true)]
    attenuated: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the configured phantoms on the evaluation grid.
    Phantom,
    /// Write the boundary sinogram of the configured source.
    Forward,
    /// Run the range test on a sinogram file.
    Check { sinogram: PathBuf },
    /// Reconstruct the source from a sinogram file.
    Reconstruct { sinogram: PathBuf },
    /// Build the integrating factor of the configured attenuation.
    Factors,
    /// Run the full cycle over a ladder of resolutions.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Nodes,
    Modes,
    Angles,
    Quad,
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<aradon::Error> for CliError {
    fn from(e: aradon::Error) -> Self {
        match e {
            aradon::Error::Io(_) | aradon::Error::Json(_) | aradon::Error::Format(_) | aradon::Error::GridMismatch(_) => CliError::usage(e.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("ARADON_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| CliError::usage(format!("ARADON_THREADS must be a positive integer, got {value:?}")))?;
    if n == 0 {
        return Err(CliError::usage("ARADON_THREADS must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::usage(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    let setup = RunConfig::load(cli.config.as_deref())?.setup()?;
    std::fs::create_dir_all(&cli.out)?;
    let opts = commands::Options { out: cli.out, factors_cache: cli.factors_cache, attenuated: cli.attenuated };
    match cli.command {
        Command::Phantom => commands::phantom(&setup, &opts),
        Command::Forward => commands::forward(&setup, &opts),
        Command::Check { sinogram } => commands::check(&setup, &opts, &sinogram),
        Command::Reconstruct { sinogram } => commands::reconstruct(&setup, &opts, &sinogram),
        Command::Factors => commands::factors(&setup, &opts),
        Command::Sweep { axis } => commands::sweep(&setup, &opts, axis),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
