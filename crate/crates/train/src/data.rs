//! In-memory training and evaluation sets built from a dataset root.

use std::collections::HashMap;

use cvvnet_core::io::{Dataset, SequenceMeta};
use cvvnet_core::{Condition, SilhouetteClip, ViewGroup};

use crate::error::Result;

/// A loaded sequence with its frames as `n_frames x h x w` values in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub sequence_id: String,
    pub identity: u64,
    pub view_group: ViewGroup,
    pub condition: Condition,
    /// Rank of this sequence among those sharing identity, view and condition.
    pub repeat: usize,
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<f64>,
}

impl SequenceData {
    pub fn from_clip(clip: &SilhouetteClip, sequence_id: impl Into<String>, repeat: usize) -> Self {
        let (height, width) = clip.frame_size().unwrap_or((0, 0));
        SequenceData {
            sequence_id: sequence_id.into(),
            identity: clip.identity,
            view_group: clip.view_group,
            condition: clip.condition,
            repeat,
            n_frames: clip.len(),
            height,
            width,
            frames: clip.to_f64(),
        }
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.frames[i * n..(i + 1) * n]
    }

    /// Concatenated frames at `indices`.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.height * self.width);
        for &i in indices {
            out.extend_from_slice(self.frame(i));
        }
        out
    }
}

/// Which sequences of a dataset to use. Empty lists select everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub views: Vec<ViewGroup>,
    pub conditions: Vec<Condition>,
    pub repeats: Vec<usize>,
}

impl Selection {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn matches(&self, view: ViewGroup, condition: Condition, repeat: usize) -> bool {
        (self.views.is_empty() || self.views.contains(&view))
            && (self.conditions.is_empty() || self.conditions.contains(&condition))
            && (self.repeats.is_empty() || self.repeats.contains(&repeat))
    }
}

/// Repeat index of every sequence: its rank, in metadata order, among the
/// sequences with the same identity, view group and condition.
pub fn repeat_indices(sequences: &[SequenceMeta]) -> Vec<usize> {
    let mut seen: HashMap<(u64, ViewGroup, Condition), usize> = HashMap::new();
    sequences
        .iter()
        .map(|m| {
            let c = seen.entry((m.identity, m.view_group, m.condition)).or_insert(0);
            *c += 1;
            *c - 1
        })
        .collect()
}

/// Loads the selected sequences of `dataset`, in metadata order.
pub fn load_selection(dataset: &Dataset, selection: &Selection) -> Result<Vec<SequenceData>> {
    let repeats = repeat_indices(&dataset.sequences);
    let mut out = Vec::new();
    for (meta, repeat) in dataset.sequences.iter().zip(repeats) {
        if selection.matches(meta.view_group, meta.condition, repeat) {
            let clip = dataset.load(meta)?;
            out.push(SequenceData::from_clip(&clip, meta.sequence.clone(), repeat));
        }
    }
    Ok(out)
}

/// Training sequences plus the identity-to-class mapping.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub sequences: Vec<SequenceData>,
    /// Sorted distinct identities; class index = position.
    pub classes: Vec<u64>,
}

impl TrainSet {
    pub fn new(sequences: Vec<SequenceData>) -> Self {
        let mut classes: Vec<u64> = sequences.iter().map(|s| s.identity).collect();
        classes.sort_unstable();
        classes.dedup();
        TrainSet { sequences, classes }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn label(&self, identity: u64) -> Option<usize> {
        self.classes.binary_search(&identity).ok()
    }

    pub fn identities(&self) -> Vec<u64> {
        self.sequences.iter().map(|s| s.identity).collect()
    }
}
