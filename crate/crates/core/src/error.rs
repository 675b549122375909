use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: bad field `{field}`: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        reason: String,
    },

    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("category `{l2}` is filed under both `{first}` and `{second}`")]
    CategoryConflict {
        l2: String,
        first: String,
        second: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("unknown location `{0}`")]
    UnknownLocation(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("self-loop on user `{0}`")]
    SelfLoop(String),

    #[error("node `{0}` has no neighbors")]
    IsolatedNode(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid weight {weight} at index {index}")]
    InvalidWeight { index: usize, weight: f64 },

    #[error("non-finite value during training at pair ({center}, {context})")]
    NonFinite { center: String, context: String },

    #[error("labels must contain both classes (positives={positives}, negatives={negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("user sets differ: {0}")]
    UserSetMismatch(String),

    #[error("generalized location `{0}` has no candidate originals")]
    EmptyCell(String),

    #[error("not enough stranger pairs: need {needed}, have {available}")]
    NotEnoughStrangers { needed: usize, available: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
