use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error("{path}: line {line} is not valid UTF-8")]
    Encoding { path: PathBuf, line: usize },

    #[error("parallel corpus sides are misaligned: {left} has {left_lines} lines, {right} has {right_lines}")]
    Misaligned {
        left: String,
        left_lines: usize,
        right: String,
        right_lines: usize,
    },

    #[error("corpus `{corpus}` has {available} sentences but its quota is {quota}")]
    QuotaExceeded {
        corpus: String,
        quota: usize,
        available: usize,
    },

    #[error("invalid lexicon: {0}")]
    Lexicon(String),

    #[error("{what} line {line}: {msg}")]
    Format {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("noise: {0}")]
    Noise(String),

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Wire(#[from] crate::loader::wire::WireError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
