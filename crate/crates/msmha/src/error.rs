use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up (matmul inner dims, concat rows, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// A value-level precondition failed (empty list, out-of-range index, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// A structural configuration is invalid (head schedule, model dims, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An on-disk artifact does not match its format contract.
    #[error("format error: {0}")]
    Format(String),

    /// Runtime data failed a consistency check (unnormalized posterior, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
