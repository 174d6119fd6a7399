use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the oblivious training pipeline and its I/O surfaces.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("trace has an unclosed parallel phase")]
    UnclosedParallelPhase,

    #[error("OHT capacity contract violated: {overflowed} request(s) did not fit in either tier")]
    CapacityViolation { overflowed: u64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
