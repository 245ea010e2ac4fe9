//! Command-line front end for the analysis pipeline: configuration
//! loading, stage orchestration, and process exit conventions.

pub mod config;
pub mod stages;

use ghostgrid_core::error::Error;

pub use config::{load_config, PipelineConfig};

/// Machine-readable class of an error, printed in the JSON error line.
pub fn error_class(err: &Error) -> &'static str {
    match err {
        Error::Parameter(_) => "parameter",
        Error::Validation(_) => "validation",
        Error::Parse { .. } => "parse",
        Error::Alignment(_) => "alignment",
        Error::Io(_) => "io",
        Error::Internal(_) => "internal",
    }
}

/// Exit status: 1 for anything the caller can fix (bad parameters, bad
/// input data), 2 for i/o failures, 3 for internal invariant violations.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parameter(_) | Error::Validation(_) | Error::Parse { .. } | Error::Alignment(_) => 1,
        Error::Io(_) => 2,
        Error::Internal(_) => 3,
    }
}
