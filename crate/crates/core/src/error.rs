use thiserror::Error;

/// Errors raised by the numerical operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("sample point outside the grid and no exterior data: {0}")]
    OutOfDomain(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("exterior data required: {0}")]
    MissingExterior(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("oracle consistency: {0}")]
    OracleConsistency(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
