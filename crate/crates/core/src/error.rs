use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. The CLI maps the variants onto exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate 6D rotation: {0}")]
    Degenerate6d(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid skeleton or limit table: {0}")]
    Skeleton(String),

    #[error("keyframe error: {0}")]
    Keyframe(String),

    #[error("BVH parse error at line {line}: {msg}")]
    BvhParse { line: usize, msg: String },

    #[error("unknown joint `{0}` in BVH hierarchy")]
    UnknownJoint(String),

    #[error("clip store: {0}")]
    Store(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training stage order: {0}")]
    StageOrder(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::StageOrder(_) => 1,
            Error::NonFinite(_) | Error::Numeric(_) | Error::Degenerate6d(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
