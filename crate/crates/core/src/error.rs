use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch at {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("layer {index} ({kind}): {message}")]
    Layer {
        index: usize,
        kind: &'static str,
        message: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{format} file truncated at byte offset {offset} while reading {what}")]
    Truncated {
        format: &'static str,
        offset: usize,
        what: &'static str,
    },

    #[error("{format} format error at byte offset {offset}: {message}")]
    Format {
        format: &'static str,
        offset: usize,
        message: String,
    },

    #[error("{path}: row {row}: {message}")]
    Manifest {
        path: String,
        row: usize,
        message: String,
    },

    #[error("missing utterance ids: {0:?}")]
    MissingIds(Vec<String>),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("stage `{stage}` failed for seed {seed}: {source}")]
    Stage {
        stage: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("wav {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
