use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KbcError>;

#[derive(Debug, Error)]
pub enum KbcError {
    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    Parse {
        path: PathBuf,
        line: usize,
        found: usize,
    },

    #[error("{path}:{line}: unknown {kind} '{name}' (not in the fixed vocabulary)")]
    UnknownSymbol {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        name: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid cache file {path}: {reason}")]
    BadCache { path: PathBuf, reason: String },

    #[error("invalid checkpoint {path}: {reason}")]
    BadCheckpoint { path: PathBuf, reason: String },

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("store is already reciprocal-augmented")]
    AlreadyAugmented,

    #[error("operation requires a reciprocal-augmented store")]
    NotAugmented,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("no rank-{rank} decomposition fitted within tolerance {tolerance:e} (best residual {best_residual:e})")]
    RankTooSmall {
        rank: usize,
        tolerance: f64,
        best_residual: f64,
    },

    #[error("search failed to fit the target within {restarts} restarts")]
    SearchExhausted { restarts: usize },

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl KbcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KbcError::Io {
            path: path.into(),
            source,
        }
    }
}
