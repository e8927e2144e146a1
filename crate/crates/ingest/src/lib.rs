//! Network side of the toolkit: a TCP ingestion server that runs the
//! streaming pipeline per connected sensor, and a sensor emulator.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub mod emulator;
pub mod protocol;
pub mod record;
pub mod server;

pub use emulator::{emulate, emulate_synth, Pace};
pub use protocol::{hello_line, parse_hello, HelloError};
pub use record::{read_session_file, session_file_name, SessionRecord};
pub use server::{Registry, Server, ServerConfig, SessionEnd, SessionSummary};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("storage directory {path} is not writable: {source}")]
    Storage { path: PathBuf, source: io::Error },
    #[error("connection to {target} failed: {source}")]
    Connect { target: String, source: io::Error },
    #[error(transparent)]
    Hello(#[from] HelloError),
    #[error(transparent)]
    Synth(#[from] bcg_core::SynthError),
    #[error(transparent)]
    Io(io::Error),
}
