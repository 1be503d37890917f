use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A forward computation produced NaN or infinity; `op` names the first
    /// primitive whose output was non-finite.
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("row {row}: {msg}")]
    DataRow { row: usize, msg: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("stream: {0}")]
    Stream(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status: 1 for runtime failures, 2 for invalid input or
    /// configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::Training(_) | Error::Io(_) => 1,
            _ => 2,
        }
    }
}
