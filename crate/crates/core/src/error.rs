use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the solver, generators and I/O layers.
#[derive(Debug, Error)]
pub enum GmcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {0} is not in the active set")]
    IndexNotActive(usize),

    #[error("index {0} is not in the inactive set")]
    IndexNotInactive(usize),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("parse error in {file}: row {row}, column {col}: {msg}")]
    Parse {
        file: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GmcError>;
