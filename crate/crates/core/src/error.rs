use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver, its oracle, and the artifact pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at {location}")]
    NonFinite { location: String },

    #[error("length mismatch: {what} (expected {expected}, got {got})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("spectral solver blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("zero reference norm")]
    ZeroReference,

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("malformed artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn non_finite(location: impl Into<String>) -> Self {
        Error::NonFinite {
            location: location.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
