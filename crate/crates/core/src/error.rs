//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset handling, training, curvature fitting and
/// posterior evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Input dimensions do not match what the model or operation expects.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value is out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Dataset-level problem (empty data, label out of range, mixed label types).
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite values or other numeric breakdown.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Operation not defined for this curvature kind or task.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The training loss became non-finite.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    /// Dense-oracle operation requested above its size limit.
    #[error("oracle scale exceeded: d = {got} > {limit}")]
    OracleScale { limit: usize, got: usize },

    /// Malformed CSV input.
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
