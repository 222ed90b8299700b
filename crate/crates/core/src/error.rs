use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("outside the formula's domain: {0}")]
    Domain(String),

    #[error("parameters fall between asymptotic regimes: {0}")]
    Unclassifiable(String),

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
