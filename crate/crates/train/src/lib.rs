//! Training for CVVNet: the joint triplet + cross-entropy objective,
//! identity-balanced sampling, AdamW under a one-cycle schedule, and a
//! checkpointed, exactly resumable training loop.

pub mod adamw;
pub mod augment;
pub mod config;
pub mod data;
pub mod embed;
mod error;
pub mod loss;
pub mod metrics;
pub mod sampler;
pub mod schedule;
pub mod seed;
pub mod trainer;

pub use adamw::{AdamW, AdamWConfig};
pub use augment::AugmentConfig;
pub use config::TrainConfig;
pub use embed::{embed_sequences, EmbeddingKind};
pub use data::{load_selection, repeat_indices, Selection, SequenceData, TrainSet};
pub use error::{Result, TrainError};
pub use loss::{ce_loss, total_loss, triplet_loss, triplet_loss_value, LossReport, LossWeights, TripletStats};
pub use metrics::{read_metrics, StepRecord};
pub use sampler::{Batch, BatchSampler};
pub use schedule::{lr_at_step, ScheduleConfig};
pub use trainer::{checkpoint_dir, list_checkpoints, train, BatchInput, Trainer};

/// Keeps freed large blocks inside the glibc heap instead of returning them
/// to the kernel. Training allocates and drops the same large activation
/// buffers every step; without this each step pays fresh page faults.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds and is called before any contention.
    unsafe {
        libc::mallopt(libc::M_MMAP_MAX, 0);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
