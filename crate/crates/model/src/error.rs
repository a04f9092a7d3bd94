use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { context: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("spatial size {h}x{w} is not divisible by the key/value stride {stride}")]
    IndivisibleSpatial { h: usize, w: usize, stride: usize },
    #[error("feature height {h} is not divisible by bin count {bins}")]
    IndivisibleHeight { h: usize, bins: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model archive {path}: {message}")]
    Archive { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn expect_shape(context: &str, found: &[usize], expected: &[Option<usize>]) -> Result<()> {
    let ok = found.len() == expected.len() && found.iter().zip(expected).all(|(f, e)| e.is_none_or(|e| e == *f));
    if ok {
        Ok(())
    } else {
        Err(ModelError::ShapeMismatch {
            context: context.to_string(),
            expected: expected.iter().map(|e| e.unwrap_or(0)).collect(),
            found: found.to_vec(),
        })
    }
}
