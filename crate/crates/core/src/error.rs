use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("tie in the row of agent {agent}: agents {a} and {b} have equal utility")]
    Tie { agent: usize, a: usize, b: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid matching: {0}")]
    InvalidMatching(String),

    #[error("size mismatch: expected {expected} agents, got {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("symmetric differences are not vertex-disjoint (shared vertex {0})")]
    NotDisjoint(usize),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
