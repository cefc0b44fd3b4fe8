use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch in {op}: axis {axis} expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        axis: String,
        expected: usize,
        got: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(op: &'static str, axis: impl Into<String>, expected: usize, got: usize) -> Error {
    Error::ShapeMismatch {
        op,
        axis: axis.into(),
        expected,
        got,
    }
}
