use std::path::PathBuf;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum VesselGraphError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid volume header in {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("graph file parse error: {0}")]
    GraphParse(String),
}

impl VesselGraphError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VesselGraphError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, VesselGraphError>;
