//! Crate-wide error type.
//!
//! Variants are grouped by failure category so the CLI can map them onto
//! distinct exit codes: input format problems, header mismatches, backend
//! failures, and parameter validation.

use thiserror::Error;

/// Any failure produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Two input records claim the same id.
    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    /// A line in an input file could not be parsed or violates a field
    /// constraint. `line` is 1-based and counts every line in the file,
    /// including headers.
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: String,
        line: usize,
        message: String,
    },

    /// A preextracted-recipe lookup found no entry for the paper.
    #[error("no recipe available for paper {0:?}")]
    MissingRecipe(String),

    /// A precomputed-vector lookup found no entry for the id.
    #[error("no precomputed vector for id {0:?}")]
    MissingVector(String),

    /// A persisted file declares a format version this build does not read.
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    /// An index was built in a different embedding space than the run is
    /// configured for. Always a hard error: scores across spaces are garbage.
    #[error("model tag mismatch: index has {found:?}, run expects {expected:?}")]
    ModelTagMismatch { expected: String, found: String },

    /// Two vectors (or a vector and an index) disagree on dimensionality.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A remote or file backend failed. `retryable` marks transport-level
    /// failures (timeouts, 5xx) that a bounded retry loop may re-attempt;
    /// permanent failures (4xx, malformed reply) are not retried.
    #[error("backend {backend:?} failed for {id:?}: {message}")]
    Backend {
        backend: String,
        id: String,
        message: String,
        retryable: bool,
    },

    /// A pipeline run asked for a view with no index loaded.
    #[error("no index loaded for view {0:?}")]
    MissingIndex(String),

    /// Parameter validation failed (e.g. K > K_c, tau out of range).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A metric value is undefined for the given inputs (e.g. recall with an
    /// empty relevant set).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures a retry loop is allowed to re-attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Backend { retryable: true, .. })
    }
}
