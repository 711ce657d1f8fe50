use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("unsupported audio: {0}")]
    Unsupported(String),
    #[error("waveform too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown phone symbol '{0}'")]
    UnknownPhone(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("degenerate covariance: rank {rank} < requested {requested}")]
    RankDeficient { rank: usize, requested: usize },
    #[error("no valid alignment path: {0}")]
    NoPath(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
