use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no fact marker matched and the fallback policy is strict")]
    NoFactFound,
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("input is empty")]
    EmptyInput,
    #[error("span {start}..{end} out of bounds for sequence of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("sequence of {len} positions exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },
    #[error("no masked positions to score")]
    NoMaskedPositions,
    #[error("unknown document {0}")]
    UnknownDoc(String),
    #[error("dimension mismatch: query has {query}, index has {index}")]
    DimMismatch { query: usize, index: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("lexical index missing")]
    MissingIndex,
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("missing parameter tensor {0}")]
    MissingParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) | Error::InvalidConfig(_) => "config",
            Error::Parse { .. } | Error::Json(_) | Error::Checkpoint(_) => "parse",
            Error::Io(_) => "io",
            Error::NonFinite { .. }
            | Error::ShapeMismatch { .. }
            | Error::NonScalarLoss(_)
            | Error::DimMismatch { .. } => "numeric",
            _ => "data",
        }
    }
}
