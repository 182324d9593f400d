use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in `{entry}` during {context}")]
    NonFinite { entry: String, context: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint entry `{entry}` does not match: {detail}")]
    CheckpointMismatch { entry: String, detail: String },

    #[error("replay buffer holds {have} transitions, need at least {need}")]
    BufferBelowMinimum { have: usize, need: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
