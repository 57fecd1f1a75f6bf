use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: lhs is {lhs:?}, rhs is {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("line {line}: unknown class id `{id}`")]
    UnknownId { line: usize, id: String },

    #[error("no embedding tokens found for class(es): {}", .0.join(", "))]
    Unresolvable(Vec<String>),

    #[error("class `{0}` already present")]
    DuplicateName(String),

    #[error("{}:{line}: {msg}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown model id {0}, expected 1..=5")]
    UnknownModel(u8),

    #[error("stale or mismatched cache: {0}")]
    StaleCache(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Empty(&'static str),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Shape { op, lhs, rhs }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
