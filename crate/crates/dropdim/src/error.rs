//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for an operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A numeric or enum parameter is outside its documented range.
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// A token id or example index is out of range.
    #[error("index error: {message}")]
    Index { message: String },

    /// A run-configuration field failed to parse or validate.
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Malformed checkpoint, trace, or dataset file.
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub fn index(message: impl Into<String>) -> Self {
        Error::Index {
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
