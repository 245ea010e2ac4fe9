//! Error type shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented bounds.
    #[error("parameter: {0}")]
    Parameter(String),

    /// Input data failed validation (malformed row in strict mode,
    /// inconsistent world spec, bad region geometry, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// Strict-mode parse failure, with the 1-based input line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// Two series that must share dates do not.
    #[error("alignment: {0}")]
    Alignment(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// An internal invariant was violated; indicates a bug.
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
