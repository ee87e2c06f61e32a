use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input at row {row}, column {column}: {message}")]
    MalformedInput {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unusable dataset `{name}`: {reason}")]
    UnusableDataset { name: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("infeasible budget: no model fits within {budget}")]
    InfeasibleBudget { budget: f64 },

    #[error("learner failure: {0}")]
    Learner(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

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

    /// True for errors caused by the caller's inputs (files, arguments)
    /// rather than by an internal invariant.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Contract(_))
    }
}
