//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at index {index}: expected {expected}, got {got}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix not positive definite: smallest pivot {pivot:.6e}")]
    NotPositiveDefinite { pivot: f64 },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("all categorical log-weights are -inf or NaN")]
    DegenerateWeights,

    #[error("worker {worker_id} already joined")]
    DuplicateWorker { worker_id: usize },

    #[error("no global assignment recorded for worker {worker_id}, local cluster {local}")]
    MissingAssignment { worker_id: usize, local: usize },

    #[error("worker {worker_id} failed: {message}")]
    WorkerFailed { worker_id: usize, message: String },

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
