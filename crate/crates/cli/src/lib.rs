//! The `bcg` command-line tool. `main.rs` only parses arguments and maps
//! [`CliError`] to an exit code; everything else lives here so it can be
//! tested in-process.

use std::io;
use std::path::Path;

use thiserror::Error;

pub mod args;
pub mod commands;
pub mod config;
pub mod signal;

pub use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or unwritable files.
    #[error("{0}")]
    Input(String),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("network: {0}")]
    Network(String),
}

impl CliError {
    pub const EXIT_USAGE: i32 = 1;
    pub const EXIT_INPUT: i32 = 2;
    pub const EXIT_CALIBRATION: i32 = 3;
    pub const EXIT_NETWORK: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => Self::EXIT_USAGE,
            CliError::Input(_) => Self::EXIT_INPUT,
            CliError::Calibration(_) => Self::EXIT_CALIBRATION,
            CliError::Network(_) => Self::EXIT_NETWORK,
        }
    }

    pub(crate) fn io(path: &Path, e: io::Error) -> CliError {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub(crate) fn io_opt(path: Option<&Path>, e: io::Error) -> CliError {
        match path {
            Some(p) => Self::io(p, e),
            None => CliError::Input(format!("stdout: {e}")),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Analyze(a) => commands::analyze(a, &file),
        Command::Scalogram(a) => commands::scalogram_cmd(a, &file),
        Command::Calibrate(a) => commands::calibrate(a, &file),
        Command::Serve(a) => commands::serve(a, &file),
        Command::Emulate(a) => commands::emulate_cmd(a, &file),
        Command::Synth(a) => commands::synth_cmd(a, &file),
    }
}
