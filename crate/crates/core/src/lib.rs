//! Gait domain types, silhouette alignment, clip sampling, the procedural
//! walker generator and the on-disk dataset layout.

mod error;
mod frame;
pub mod io;
pub mod manifest;
mod preprocess;
mod sample;
pub mod synth;

pub use error::GaitError;
pub use frame::{Condition, SilhouetteClip, SilhouetteFrame, ViewGroup, MAX_VERTICAL_ANGLE};
pub use preprocess::{preprocess_silhouette, TARGET_H, TARGET_W};
pub use sample::{clip_indices, sample_clip, SampleMode, DEFAULT_CLIP_LENGTH};
pub use synth::{synthesize_walker_clip, WalkerSpec};
