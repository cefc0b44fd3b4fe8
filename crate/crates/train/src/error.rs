use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] rc3d_core::Error),
    #[error(transparent)]
    Data(#[from] rc3d_data::DataError),
    #[error("optical flow: {0}")]
    Flow(#[from] rc3d_flow::FlowError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> TrainError {
    TrainError::Config(msg.into())
}
