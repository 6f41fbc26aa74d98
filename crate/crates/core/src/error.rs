use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the CLI exit code they map to: configuration and
/// usage problems, data problems, and provider problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("document `{0}` has no text after normalization")]
    EmptyDocument(String),

    #[error("alignment error: expected {expected} items, provider returned {actual}")]
    Alignment { expected: usize, actual: usize },

    #[error("unparseable provider output ({reason}): {raw}")]
    Unparseable { reason: String, raw: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("item `{id}`: {message}")]
    MissingField { id: String, message: String },

    #[error("index is empty")]
    EmptyIndex,

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("malformed provider payload: {0}")]
    MalformedPayload(String),

    #[error("work directory is locked by another process: {0}")]
    Locked(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 provider.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Locked(_) => 1,
            Error::Auth(_)
            | Error::RateLimited { .. }
            | Error::Provider(_)
            | Error::MalformedPayload(_) => 3,
            _ => 2,
        }
    }
}
