use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model definition error: {0}")]
    ModelDefinition(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }
}
