use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or tensor violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A shape disagreement between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Bad magic bytes, unknown version, or an otherwise unparseable file.
    #[error("format error: {0}")]
    Format(String),

    /// The payload is shorter or longer than the header declares.
    #[error("truncated payload: header declares {expected} values, found {found}")]
    Truncated { expected: u64, found: u64 },

    /// A restricted attention row would attend to zero keys.
    #[error("degenerate focus set: {0}")]
    DegenerateFocus(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
