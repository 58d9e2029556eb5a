//! Crate-wide error type.

use thiserror::Error;

/// Errors raised anywhere in the pipeline. Each variant maps to a distinct
/// CLI exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector shape disagreement.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid input data or configuration value.
    #[error("validation error: {0}")]
    Validation(String),

    /// Non-finite value where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Negative sampling could not satisfy the request.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// File parse failure; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Training aborted (e.g. non-finite loss) at the given epoch.
    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit codes start at 10 so they never collide with the CLI parser's
    /// own usage-error codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) => 10,
            Error::Validation(_) => 11,
            Error::Numeric(_) => 12,
            Error::Sampling(_) => 13,
            Error::Parse { .. } => 14,
            Error::Training { .. } => 15,
            Error::Io(_) => 16,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
