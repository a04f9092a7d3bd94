use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum GaitError {
    #[error("frame has no foreground pixel")]
    EmptyFrame,
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("vertical angle {0} outside [0, 80] degrees")]
    InvalidAngle(f64),
    #[error("empty frame sequence")]
    EmptySequence,
    #[error("clip length must be at least 1")]
    InvalidClipLength,
    #[error("frames disagree in size: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl GaitError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GaitError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        GaitError::Format { path: path.into(), message: message.into() }
    }
}
