use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("model: {0}")]
    Core(#[from] rc3d_core::Error),
    #[error("data: {0}")]
    Data(#[from] rc3d_data::DataError),
    #[error("flow: {0}")]
    Flow(#[from] rc3d_flow::FlowError),
    #[error("train: {0}")]
    Train(#[from] rc3d_train::TrainError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("gradcheck: {0}")]
    GradCheck(String),
}

impl CliError {
    /// The message on one line, as printed on stderr.
    pub fn one_line(&self) -> String {
        self.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
