//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate relevance threshold: {positives} of {total} candidates labeled relevant")]
    DegenerateThreshold { positives: usize, total: usize },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot split {queries} queries into {buckets} nonempty buckets")]
    TooFewQueries { queries: usize, buckets: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite loss in {stage} at step {step}: {detail}")]
    NonFiniteLoss {
        stage: &'static str,
        step: usize,
        detail: String,
    },

    #[error("reference policy assigns zero probability to the sampled label")]
    ZeroReferenceProbability,

    #[error("missing or unreadable input {path}: run the `{producer}` stage first")]
    MissingInput {
        path: PathBuf,
        producer: &'static str,
    },

    #[error("digest mismatch for {path}: manifest records {expected}, file hashes to {found}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed record at {path}:{line}: {detail}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-parsable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "config",
            Error::DegenerateThreshold { .. } => "degenerate-threshold",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::TooFewQueries { .. } => "too-few-queries",
            Error::EmptyBatch => "empty-batch",
            Error::NonFiniteLoss { .. } => "train-diverged",
            Error::ZeroReferenceProbability => "zero-reference-probability",
            Error::MissingInput { .. } => "missing-input",
            Error::DigestMismatch { .. } => "digest-mismatch",
            Error::Checkpoint(_) => "checkpoint",
            Error::MalformedRecord { .. } => "malformed-record",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
