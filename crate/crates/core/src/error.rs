use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A caller broke an operation's precondition (non-scalar loss, missing gradient, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// The autodiff graph is not in a state that permits the request.
    #[error("graph state error: {0}")]
    State(String),

    #[error("format error in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("checkpoint was written for a different model configuration (expected hash {expected}, found {found})")]
    ConfigMismatch { expected: String, found: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidShape(format!($($arg)*))
    };
}

macro_rules! arg_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}

pub(crate) use arg_err;
pub(crate) use shape_err;
