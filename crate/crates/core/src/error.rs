use thiserror::Error;

/// Errors raised anywhere in the simulator, environment, agents or tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("action domain error: {0}")]
    ActionDomain(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("search error: {0}")]
    Search(String),
    #[error("i/o error on {path}: {source}")]
    FileIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::FileIo {
            path: path.display().to_string(),
            source,
        }
    }
}
