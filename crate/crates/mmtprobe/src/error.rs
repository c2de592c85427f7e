//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch in a tensor operation; carries both offending shapes.
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// An index (token id, row, axis) out of its valid range.
    #[error("{what} {index} out of range (size {size})")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    /// A caller broke an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Loss over a batch whose mask selects nothing.
    #[error("degenerate batch: mask selects no positions")]
    DegenerateBatch,

    /// Malformed binary file; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Bad entity annotation, naming the sample and token index.
    #[error("annotation error in sample {sample}: token index {index} out of range (sentence length {len})")]
    Annotation {
        sample: usize,
        index: usize,
        len: usize,
    },

    /// Input files that must be line-aligned are not.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Training diverged; carries diagnostics.
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
