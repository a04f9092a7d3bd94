//! The desk-scale experiment: train a small network on the Low view of a
//! synthetic grid, embed every sequence, and score the view x condition
//! report.

use std::collections::HashMap;
use std::path::Path;

use cvvnet_core::manifest::{GridSpec, Manifest};
use cvvnet_core::{Condition, ViewGroup};
use cvvnet_eval::{cross_view_report, flat_scores, EvalRecord, EvalReport, Exclusion, GalleryScope, Protocol};
use cvvnet_train::{
    embed_sequences, EmbeddingKind, Selection, SequenceData, StepRecord, TrainConfig, TrainSet, Trainer,
};

use crate::error::Result;

/// Renders every manifest entry in memory. Sequence ids follow the on-disk
/// layout and repeats count entries sharing identity, view and condition.
pub fn render_manifest(manifest: &Manifest) -> Result<Vec<SequenceData>> {
    let mut seen: HashMap<(u64, ViewGroup, Condition), usize> = HashMap::new();
    let mut out = Vec::with_capacity(manifest.entries.len());
    for (i, e) in manifest.entries.iter().enumerate() {
        let clip = e.render()?;
        let r = seen.entry((e.identity_seed, clip.view_group, e.condition)).or_insert(0);
        out.push(SequenceData::from_clip(&clip, manifest.sequence_dir(i), *r));
        *r += 1;
    }
    Ok(out)
}

/// Pairs embeddings with their sequence labels.
pub fn to_records(seqs: &[SequenceData], embeddings: &[cvvnet_autograd::Tensor]) -> Vec<EvalRecord> {
    seqs.iter()
        .zip(embeddings)
        .map(|(s, e)| {
            EvalRecord::new(
                e.data().to_vec(),
                e.dim(0),
                e.dim(1),
                s.identity,
                Some(s.view_group),
                Some(s.condition),
                s.sequence_id.clone(),
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DeskOutcome {
    /// Every sequence is a probe; the gallery is every other sequence.
    pub report: EvalReport,
    /// Same, with same-view gallery entries removed.
    pub other_views: EvalReport,
    /// High probes against a gallery of Low sequences only.
    pub high_vs_low_gallery: f64,
    pub losses: Vec<StepRecord>,
}

impl DeskOutcome {
    /// Mean rank-1 over the populated conditions of one test view.
    pub fn view_rank1(report: &EvalReport, view: ViewGroup) -> Option<f64> {
        let cells = report.cells.as_ref()?;
        let vals: Vec<f64> = cells[view.index()].iter().flatten().map(|c| c.rank1).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn same_view(&self) -> f64 {
        Self::view_rank1(&self.report, ViewGroup::Low).unwrap_or(0.0)
    }

    pub fn cross_view(&self) -> f64 {
        Self::view_rank1(&self.report, ViewGroup::High).unwrap_or(0.0)
    }

    /// Cross-view rank-1 per condition (NM, BG, CL).
    pub fn cross_view_cells(&self) -> [f64; 3] {
        let cells = self.report.cells.as_ref().map(|c| c[ViewGroup::High.index()]);
        std::array::from_fn(|i| cells.and_then(|row| row[i]).map_or(0.0, |c| c.rank1))
    }
}

/// Scores `model`-free embeddings of `seqs`.
pub fn score(seqs: &[SequenceData], records: &[EvalRecord]) -> Result<(EvalReport, EvalReport, f64)> {
    let report = cross_view_report(records, Protocol::DroneGaitStyle, GalleryScope::AllViews)?;
    let other = cross_view_report(records, Protocol::DroneGaitStyle, GalleryScope::OtherViews)?;
    let pick = |v: ViewGroup| -> Vec<EvalRecord> {
        seqs.iter().zip(records).filter(|(s, _)| s.view_group == v).map(|(_, r)| r.clone()).collect()
    };
    let (high, low) = (pick(ViewGroup::High), pick(ViewGroup::Low));
    let strict = if high.is_empty() || low.is_empty() {
        0.0
    } else {
        flat_scores(&high, &low, Exclusion::SameSequence)?.rank1
    };
    Ok((report, other, strict))
}

/// Trains on the sequences selected by `config` and evaluates on all of `seqs`.
pub fn desk_experiment(
    config: &TrainConfig,
    seqs: &[SequenceData],
    kind: EmbeddingKind,
    run_dir: &Path,
) -> Result<DeskOutcome> {
    let train: Vec<SequenceData> = seqs
        .iter()
        .filter(|s| config.selection.matches(s.view_group, s.condition, s.repeat))
        .cloned()
        .collect();
    let mut trainer = Trainer::new(config.clone(), TrainSet::new(train), run_dir)?;
    let losses = trainer.run(config.schedule.total_steps)?;
    let embeddings = embed_sequences(&trainer.model, seqs, kind, 8)?;
    let records = to_records(seqs, &embeddings);
    let (report, other_views, high_vs_low_gallery) = score(seqs, &records)?;
    Ok(DeskOutcome { report, other_views, high_vs_low_gallery, losses })
}

/// Training setup for the desk-scale experiment: the toy layout at reduced
/// widths, 1200 steps on Low-view repeat-0 sequences only.
pub fn desk_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.backbone.stage_channels = vec![4, 8];
    c.backbone.n_heads = 1;
    c.clip_length = 4;
    c.p = 4;
    c.k = 2;
    c.schedule = c.schedule.with_total_steps(1200);
    c.schedule.max_lr = 2e-3;
    c.checkpoint_every = 0;
    c.selection = Selection { views: vec![ViewGroup::Low], conditions: Vec::new(), repeats: vec![0] };
    c
}

/// The desk-scale grid rendered in memory.
pub fn desk_sequences() -> Result<Vec<SequenceData>> {
    render_manifest(&Manifest::grid(&GridSpec::desk_default())?)
}
