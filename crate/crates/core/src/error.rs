//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the forefront library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A series (or channel) is empty or shorter than the operation needs.
    #[error("empty series: {0}")]
    EmptySeries(String),

    /// Not enough samples remain after the onset to cut the requested prefix.
    /// Callers treat this as "stage not yet reached".
    #[error("prefix unavailable: need {needed} samples from onset, have {available}")]
    PrefixUnavailable { needed: usize, available: usize },

    /// A dataset contained no usable items.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Conditional accuracy is undefined because every sample was rejected.
    #[error("no coverage: all samples rejected, conditional accuracy undefined")]
    NoCoverage,

    /// An object is not in the state the operation requires.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// No decision could be produced for a series.
    #[error("no decision: {0}")]
    NoDecision(String),

    /// A structured text file did not match the expected layout.
    #[error("format error in {file} (row {row}): {message}")]
    Format {
        file: String,
        row: usize,
        message: String,
    },

    /// An I/O failure, tagged with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Training failed; carries the stage or grid context it happened in.
    #[error("training failed ({context}): {source}")]
    Training {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap an error with training-stage context.
    pub fn in_training(self, context: impl Into<String>) -> Self {
        Error::Training {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
