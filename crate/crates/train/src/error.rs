use std::path::PathBuf;

use cvvnet_autograd::ArchiveError;
use cvvnet_core::GaitError;
use cvvnet_model::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] GaitError),
    #[error("tensor archive: {0}")]
    Archive(#[from] ArchiveError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("need {needed} identities per batch but the dataset has {available}")]
    InsufficientIdentities { needed: usize, available: usize },
    #[error("label {label} is outside [0, {num_classes})")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("step {step} is outside [0, {total}]")]
    StepOutOfRange { step: usize, total: usize },
    #[error("non-finite loss at step {step}; batch written to {batch_dir}")]
    NonFiniteLoss { step: usize, batch_dir: PathBuf },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

impl TrainError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrainError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
