use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a precondition of an operation (shapes, signatures, ranges).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    /// A forward solve that must succeed did not converge.
    #[error("solve failed: {0}")]
    Solve(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
