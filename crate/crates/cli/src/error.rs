use std::path::PathBuf;

use cdfit::CdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: CdError },

    #[error(transparent)]
    Model(#[from] CdError),

    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn invalid(message: impl Into<String>) -> CliError {
    CliError::Invalid(message.into())
}
