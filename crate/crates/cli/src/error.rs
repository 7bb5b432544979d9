use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{path}: size mismatch, expected {expected} bytes but found {actual}")]
    SizeMismatch { path: PathBuf, expected: usize, actual: usize },
    #[error(transparent)]
    Core(#[from] nasa_core::Error),
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, reason: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), reason: reason.into() }
    }
}
