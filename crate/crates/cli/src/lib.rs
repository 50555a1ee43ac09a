//! Command-line front end: dataset synthesis, training, evaluation,
//! prediction, attention export and gradient self-checks.

pub mod commands;
pub mod config;

use lsenet::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// An error carrying the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
            Error::State(_) | Error::ContractViolation(_) => EXIT_CHECK_FAILED,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}
