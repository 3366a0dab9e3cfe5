use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LaserError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LaserError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("index out of range: {what} {index} >= {bound}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("training diverged at batch {batch}: loss = {loss}")]
    Divergence { batch: usize, loss: f64 },
    #[error("group at train position {position} (group {group}) has no training data; re-group before unlearning")]
    EmptyGroup { group: usize, position: usize },
    #[error("unknown user id {0}")]
    UnknownUser(usize),
    #[error("user {0} does not occur in the walk corpus")]
    MissingUser(usize),
    #[error("missing artifact {path}: run `laser {command}` first")]
    MissingArtifact { path: PathBuf, command: &'static str },
}

impl LaserError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LaserError::Io {
            path: path.into(),
            source,
        }
    }
}
