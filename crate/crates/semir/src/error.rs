use std::path::PathBuf;

use semir_core::ScoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A line-oriented file failed to parse; `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: at `{json_path}`: {message}", path.display())]
    Json { path: PathBuf, json_path: String, message: String },
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: semir_core::Error },
    #[error("unsupported {what} format version {found} (expected {expected})")]
    FormatVersion { what: &'static str, found: u32, expected: u32 },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] semir_core::Error),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
