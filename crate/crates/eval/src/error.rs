use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("embedding shape {found:?} does not match {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("gallery is empty for probe {probe} after exclusion")]
    EmptyGalleryAfterExclusion { probe: String },
    #[error("record {0} lacks the view group or condition label")]
    MissingLabels(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, EvalError>;
