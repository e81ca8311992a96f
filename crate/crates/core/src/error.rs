use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("field mismatch: {left} vs {right}")]
    FieldMismatch { left: String, right: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A computation would exceed the configured entry budget.
    #[error("{what} needs {needed} entries, over the budget of {budget} (raise RIGIDLAB_BUDGET to allow it)")]
    Budget { what: String, needed: u128, budget: u64 },

    /// A checked construction invariant failed. Always a bug.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
