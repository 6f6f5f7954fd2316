//! Experiment harness behind the `fnn` binary.
//!
//! Each subcommand resolves a config, runs one study, and writes CSV files
//! whose first line is a `# fnn ...` provenance comment.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;

use clap::Parser;
use fnn_core::Error;

pub use config::{Cli, Command};

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::NonFinite(_)
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteSequenceLoss { .. }
            | Error::NumericalConsistency(_)
            | Error::AllGridPointsFailed(_)
            | Error::DegenerateFit => CliError::Numerical(msg),
            Error::Resource { .. } => CliError::Verification(msg),
            Error::Domain(_) | Error::UnsupportedDimension(_) => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    use config::*;
    match command {
        Command::SynthAbs(a) => {
            experiments::run_synth_sweep(&SynthConfig::resolve(&a, SynthTask::Abs)?).map(drop)
        }
        Command::SynthBall(a) => {
            experiments::run_synth_sweep(&SynthConfig::resolve(&a, SynthTask::Ball)?).map(drop)
        }
        Command::FourierVerify(a) => {
            experiments::run_fourier_verify(&FourierConfig::resolve(&a)?).and_then(|r| r.check())
        }
        Command::Mnist(a) => experiments::run_mnist(&MnistConfig::resolve(&a)?).map(drop),
        Command::Scrn(a) => experiments::run_scrn(&ScrnConfig::resolve(&a)?).map(drop),
        Command::PreactHist(a) => {
            experiments::run_preact_hist(&PreactConfig::resolve(&a)?).map(drop)
        }
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit status. Messages go to stdout or stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fnn: {e}");
            e.exit_code()
        }
    }
}
