//! `pfmsd`: run sigma-delta / PFM equivalence experiments from JSON configs
//! and export CSV data.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<pfmsd_core::Error> for CliError {
    fn from(e: pfmsd_core::Error) -> Self {
        if e.is_usage() {
            Self::usage(e.to_string())
        } else {
            Self::runtime(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pfmsd", version, about = "Sigma-delta / PFM equivalence experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// FFT length (power of two); overrides the config.
    #[arg(long, global = true)]
    pub nfft: Option<usize>,
    /// Scan points per crossing search window; overrides the config.
    #[arg(long, global = true)]
    pub substeps: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the CTSD and the PFM equivalent, write both traces, then the
    /// analyses listed in the config.
    Simulate,
    /// Compare the two output sequences.
    Compare {
        /// Compare two existing trace CSVs instead of simulating.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        traces: Option<Vec<PathBuf>>,
    },
    /// Predict aliased side-band spurs.
    Spurs,
    /// Sweep the input amplitude: SNDR, equivalence and coding-limit flags.
    SweepDr,
    /// Side-band series of the open-loop PFM core.
    Sidebands,
    /// Output periodogram, plus aliasing-error and pulse spectra on a dense
    /// grid when configured.
    Spectrum,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfmsd: {e}");
            ExitCode::from(e.code)
        }
    }
}
