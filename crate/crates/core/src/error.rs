use thiserror::Error;

/// Errors produced by the simulator, the models, and the dataset format.
#[derive(Debug, Error)]
pub enum Error {
    /// An invalid architecture or generator configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A qubit or class index outside its valid range.
    #[error("index {index} out of range (limit {limit})")]
    Index { index: usize, limit: usize },

    /// An invalid argument to an otherwise well-configured operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Mismatched lengths or dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation invoked in the wrong state, e.g. backward without forward.
    #[error("invalid state: {0}")]
    State(String),

    /// Malformed persisted data.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Persisted data ends before the header says it should.
    #[error("truncated input at byte offset {offset}: expected {expected} more bytes")]
    Truncated { offset: u64, expected: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
