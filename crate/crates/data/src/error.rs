use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("dataset format error: {0}")]
    Format(String),
    #[error("png: {0}")]
    Png(String),
    #[error(transparent)]
    Core(#[from] rc3d_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

impl From<png::EncodingError> for DataError {
    fn from(e: png::EncodingError) -> Self {
        Self::Png(e.to_string())
    }
}

impl From<png::DecodingError> for DataError {
    fn from(e: png::DecodingError) -> Self {
        Self::Png(e.to_string())
    }
}

impl From<serde_json::Error> for DataError {
    fn from(e: serde_json::Error) -> Self {
        Self::Format(e.to_string())
    }
}
