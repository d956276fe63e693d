use thiserror::Error;

/// Errors produced by model construction, fitting, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A factorization or density evaluation failed; `params` records the
    /// parameter values that produced it.
    #[error("numerical failure: {message} [{params}]")]
    Numerical { message: String, params: String },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, params: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            params: params.into(),
        }
    }
}
