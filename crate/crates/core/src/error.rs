//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A file could not be parsed; carries the location of the offense.
    #[error("parse error in {path} (row {row}, column {column}): {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    /// A data part lacks treated or control rows.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The indirect loss requires propensity 1/2.
    #[error("unsupported propensity {actual:.4}: {message}")]
    UnsupportedPropensity { actual: f64, message: String },

    /// Synthetic data generation failed.
    #[error("generation error: {0}")]
    Generation(String),

    /// A model file is malformed or incompatible.
    #[error("model file error: {0}")]
    ModelFile(String),

    /// Cross-run aggregation needs at least two runs.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} with learning rate {learning_rate}: {message}")]
    Diverged {
        epoch: usize,
        learning_rate: f64,
        message: String,
    },

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
