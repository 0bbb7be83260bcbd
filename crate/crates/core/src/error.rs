//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (shape mismatch, bad
    /// parameter range, non-finite input, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A metric is mathematically undefined for the given input
    /// (e.g. stable rank of the zero matrix).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A benchmark class column is degenerate (all zero or all one), so no
    /// accuracy can be attributed to it.
    #[error("undefined class {class}: label column is constant on the evaluation split")]
    UndefinedClass { class: usize },

    /// The training loss became non-finite.
    #[error("training diverged at step {step}: loss is not finite")]
    TrainingDiverged { step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A serialized file failed structural validation.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
