use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("frame extents differ: {prev:?} vs {next:?}")]
    ExtentMismatch { prev: (usize, usize), next: (usize, usize) },
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;
