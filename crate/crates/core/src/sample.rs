use rand::Rng;

use crate::error::GaitError;

pub const DEFAULT_CLIP_LENGTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// One contiguous window with a uniformly random start.
    TrainRandom,
    /// The whole sequence in order.
    EvalFull,
}

/// Frame indices of the window of `clip_length` frames starting at `start`,
/// wrapping to the beginning when the sequence is too short.
pub fn clip_indices(seq_len: usize, clip_length: usize, start: usize) -> Vec<usize> {
    assert!(seq_len > 0, "empty sequence");
    (0..clip_length).map(|i| (start + i) % seq_len).collect()
}

/// Samples frames from `seq`.
///
/// In `TrainRandom` mode the start is uniform over all windows that fit; a
/// sequence shorter than `clip_length` always starts at 0 and repeats.
pub fn sample_clip<T: Clone, R: Rng + ?Sized>(
    seq: &[T],
    clip_length: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vec<T>, GaitError> {
    if seq.is_empty() {
        return Err(GaitError::EmptySequence);
    }
    if clip_length == 0 {
        return Err(GaitError::InvalidClipLength);
    }
    match mode {
        SampleMode::EvalFull => Ok(seq.to_vec()),
        SampleMode::TrainRandom => {
            let start = if seq.len() > clip_length { rng.random_range(0..=seq.len() - clip_length) } else { 0 };
            Ok(clip_indices(seq.len(), clip_length, start).into_iter().map(|i| seq[i].clone()).collect())
        }
    }
}
