//! Probe-gallery retrieval evaluation: per-part Euclidean distances,
//! rank-k accuracy, mean average precision, view x condition tables, and
//! the embedding table format these are computed from.

mod error;
pub mod export;
pub mod metrics;
mod record;
pub mod report;

pub use error::{EvalError, Result};
pub use export::{read_embeddings, write_embeddings, EmbeddingTable};
pub use metrics::{
    average_precision, mean_average_precision, pairwise_distance, part_distance, rank_curve, rank_k, ranked_gallery,
    Exclusion, MapResult,
};
pub use record::EvalRecord;
pub use report::{cell_table, cross_view_report, flat_scores, CellTable, EvalReport, FlatScores, GalleryScope, Protocol};
