//! The `cvvnet` command line and the analysis procedures behind it:
//! feature-map frequency spectra, activation heatmaps, the desk-scale
//! training experiment and the extractor x aggregator ablation grid.

pub mod ablation;
pub mod commands;
pub mod desk;
mod error;
pub mod heatmap;
pub mod spectrum;

pub use commands::{run, OUT_DIR_ENV};
pub use error::{CliError, Result};
