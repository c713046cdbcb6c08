use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A tensor axis did not have the size an operation requires.
    #[error("{op}: dimension mismatch on {axis}: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    Shape { shape: Vec<usize>, reason: &'static str },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("weight error in layer {layer}: {message}")]
    Weight { layer: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn weight(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Weight {
            layer: layer.into(),
            message: message.into(),
        }
    }
}
