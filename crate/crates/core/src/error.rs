use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown artifact id {id}; valid ids: {valid}")]
    UnknownArtifact { id: String, valid: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("independence violation: {0}")]
    Independence(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
