use thiserror::Error;

/// Errors raised by the simulator, training loop, statistics and data loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate result: {0}")]
    Degenerate(String),

    /// A loss evaluation returned NaN or infinity while perturbing parameter `index`.
    #[error("non-finite loss while perturbing parameter {index}")]
    NonFiniteLoss { index: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("incomplete pairing, missing cells: {}", .0.join(", "))]
    IncompletePairing(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
