use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Cell that failed to parse. Row and column are 1-based, counting the header as row 1.
    #[error("parse error at row {row}, column {column}: {value:?} is not a number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A target is constant in the evaluated rows but the predictions are not.
    #[error("target {target} has zero variance in the evaluated rows")]
    DegenerateTarget { target: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than by the data itself.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::NonFinite { .. }
            | Error::InvalidDataset(_)
            | Error::InvalidConfig(_)
            | Error::DimensionMismatch { .. }
            | Error::Csv(_)
            | Error::Json(_) => true,
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
