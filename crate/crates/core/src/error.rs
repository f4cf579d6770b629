use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown category `{0}` (expected table, chair or plane)")]
    UnknownCategory(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("operation requires {expected} mode, network is in {actual} mode")]
    ModeMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("corrupt container {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },

    #[error("size mismatch in {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch { path: PathBuf, expected: u64, actual: u64 },

    #[error("manifest inconsistent with payload: {0}")]
    Inconsistent(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("non-finite loss at iteration {iteration} (stage {stage}): term `{term}` = {value}")]
    NonFiniteLoss {
        iteration: u64,
        stage: String,
        term: String,
        value: f64,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Corrupt { .. }
                | Error::VersionMismatch { .. }
                | Error::SizeMismatch { .. }
                | Error::Inconsistent(_)
                | Error::DimensionMismatch { .. }
                | Error::UnknownCategory(_)
                | Error::Empty(_)
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::ConfigMismatch(_)
        )
    }
}
