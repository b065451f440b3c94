use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("cannot decode {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("incompatible shapes: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite {component} loss ({value})")]
    NonFinite { component: &'static str, value: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command line front end: 2 for usage,
    /// configuration and data problems, 3 for runtime and numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotFound(_)
            | Error::Format { .. }
            | Error::Config(_)
            | Error::EmptyDataset(_)
            | Error::Manifest(_) => 2,
            Error::Shape(_) | Error::NonFinite { .. } | Error::Checkpoint(_) | Error::Io(_) => 3,
        }
    }
}
