use thiserror::Error;

pub type Result<T> = std::result::Result<T, GpError>;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("cholesky factorization failed for a {dim}x{dim} matrix at every jitter level up to {max_jitter:e}")]
    FactorizationFailed { dim: usize, max_jitter: f64 },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("problem size {n} exceeds the dense limit {limit}")]
    SizeLimitExceeded { n: usize, limit: usize },

    #[error("gamma must satisfy 1 < gamma <= 1.2, got {0}")]
    InvalidGamma(f64),

    #[error("objective {method} is not compatible with this model: {reason}")]
    IncompatibleState { method: String, reason: String },

    #[error("non-positive predictive variance at index {0}")]
    NonpositiveVariance(usize),

    #[error("non-finite objective at epoch {epoch}, step {step}: {value}")]
    NonFinite { epoch: usize, step: usize, value: f64 },

    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: String, msg: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("unknown checkpoint version `{0}`")]
    VersionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
