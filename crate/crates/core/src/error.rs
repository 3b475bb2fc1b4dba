use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("player count {0} outside supported range 2..={max}", max = crate::game::MAX_PLAYERS)]
    PlayerCount(usize),

    #[error("coalition {bits:#b} is not a valid coalition for {n} players")]
    InvalidCoalition { bits: u32, n: usize },

    #[error("empty coalition cannot carry a nonzero value")]
    EmptyCoalition,

    #[error("non-finite value {value} at coalition {label}")]
    NonFinite { label: String, value: f64 },

    #[error("malformed coalition label {0:?}")]
    BadLabel(String),

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("catalog file {path}: {reason}")]
    CorruptCatalog { path: PathBuf, reason: String },

    #[error("catalog checksum mismatch (stored {stored}, computed {computed})")]
    ChecksumMismatch { stored: String, computed: String },

    #[error("collection {index} fails weight verification: {reason}")]
    WeightVerification { index: usize, reason: String },

    #[error("projection result is not certified (status {0})")]
    NotCertified(String),

    #[error("game is not balanced (worst excess {0:.3e})")]
    Unbalanced(f64),

    #[error("SVD did not converge after {0} sweeps")]
    SvdNoConvergence(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
