//! Experiment orchestration for `fracmap`: argument and config handling,
//! command dispatch, the vortex report, and atomic CSV/JSON output.

use std::fmt;
use std::path::Path;

use fracmap_core::Error;

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or out-of-range configuration (exit 2).
    Config(String),
    /// File system failure (exit 2).
    Io(String),
    /// A numerical invariant or acceptance check failed (exit 1).
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Invariant(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(m) => CliError::Io(m),
            Error::Parse { .. } | Error::Precondition(_) | Error::InvalidGrid(_) | Error::InvalidMeasure(_) => {
                CliError::Config(e.to_string())
            }
            Error::Resolution(_) | Error::MissingExterior(_) | Error::OutOfDomain(_) => CliError::Config(e.to_string()),
            Error::Domain(_) | Error::DegenerateFrame(_) | Error::Empty(_) | Error::OracleConsistency(_) => {
                CliError::Invariant(e.to_string())
            }
        }
    }
}

/// Size the global rayon pool from `FRACMAP_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FRACMAP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("FRACMAP_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}
