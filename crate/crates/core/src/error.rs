use std::io;

use thiserror::Error;

/// Errors produced by the evaluation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input truncated at byte offset {offset}: {message}")]
    Truncated { offset: u64, message: String },

    #[error("duplicate key at line {line}: {key}")]
    Duplicate { line: usize, key: String },

    #[error("missing prediction for system {system:?}, user {user:?}, item {item:?}")]
    MissingPrediction { system: String, user: String, item: String },

    #[error("{count} systems is too many to enumerate orderings (max {max}); use the pairwise error matrix instead")]
    TooManySystems { count: usize, max: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
