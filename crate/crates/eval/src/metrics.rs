//! Distances, rankings, rank-k accuracy and mean average precision.

use crate::error::{EvalError, Result};
use crate::record::EvalRecord;

/// Which gallery entries a probe may not be matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exclusion {
    /// Every gallery entry is a candidate.
    None,
    /// The probe's own sequence is removed.
    #[default]
    SameSequence,
    /// The probe's own sequence and every entry of its view group are removed.
    SameSequenceAndView,
}

impl Exclusion {
    fn excludes(self, probe: &EvalRecord, candidate: &EvalRecord) -> bool {
        match self {
            Exclusion::None => false,
            Exclusion::SameSequence => candidate.sequence_id == probe.sequence_id,
            Exclusion::SameSequenceAndView => {
                candidate.sequence_id == probe.sequence_id
                    || (probe.view_group.is_some() && candidate.view_group == probe.view_group)
            }
        }
    }
}

/// Sum over parts of the Euclidean distance between matching part rows.
pub fn part_distance(a: &[f64], b: &[f64], parts: usize, dim: usize) -> f64 {
    (0..parts)
        .map(|p| {
            let (x, y) = (&a[p * dim..(p + 1) * dim], &b[p * dim..(p + 1) * dim]);
            x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
        })
        .sum()
}

/// Distance from `probe` to every gallery record.
pub fn pairwise_distance(probe: &EvalRecord, gallery: &[EvalRecord]) -> Result<Vec<f64>> {
    gallery
        .iter()
        .map(|g| {
            if g.shape() != probe.shape() {
                return Err(EvalError::ShapeMismatch { expected: probe.shape(), found: g.shape() });
            }
            Ok(part_distance(&probe.embedding, &g.embedding, probe.parts, probe.dim))
        })
        .collect()
}

/// Candidate gallery indices for `probe`, nearest first. Equal distances
/// are ordered by `sequence_id`, then by gallery position.
pub fn ranked_gallery(probe: &EvalRecord, gallery: &[EvalRecord], exclusion: Exclusion) -> Result<Vec<usize>> {
    let dist = pairwise_distance(probe, gallery)?;
    let mut idx: Vec<usize> = (0..gallery.len()).filter(|&i| !exclusion.excludes(probe, &gallery[i])).collect();
    if idx.is_empty() {
        return Err(EvalError::EmptyGalleryAfterExclusion { probe: probe.sequence_id.clone() });
    }
    idx.sort_by(|&a, &b| {
        dist[a].total_cmp(&dist[b]).then_with(|| gallery[a].sequence_id.cmp(&gallery[b].sequence_id)).then(a.cmp(&b))
    });
    Ok(idx)
}

/// Percentage of probes whose `k` nearest candidates include their identity.
pub fn rank_k(probes: &[EvalRecord], gallery: &[EvalRecord], k: usize, exclusion: Exclusion) -> Result<f64> {
    Ok(rank_curve(probes, gallery, k, exclusion)?.last().copied().unwrap_or(0.0))
}

/// Rank-1 through rank-`max_k` accuracies in percent.
pub fn rank_curve(probes: &[EvalRecord], gallery: &[EvalRecord], max_k: usize, exclusion: Exclusion) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; max_k];
    for probe in probes {
        let order = ranked_gallery(probe, gallery, exclusion)?;
        if let Some(first) = order.iter().position(|&i| gallery[i].identity == probe.identity) {
            for h in hits.iter_mut().skip(first) {
                *h += 1;
            }
        }
    }
    if probes.is_empty() {
        return Ok(vec![0.0; max_k]);
    }
    Ok(hits.iter().map(|&h| 100.0 * h as f64 / probes.len() as f64).collect())
}

/// Mean average precision over the probes that have at least one positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapResult {
    /// Percent; 0 when no probe could be scored.
    pub map: f64,
    pub evaluated: usize,
    /// Probes without any positive candidate.
    pub skipped: usize,
}

/// Average precision of one ranked list given the positive flags, in [0, 1].
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut found = 0usize;
    let mut sum = 0.0;
    for (r, &rel) in relevant.iter().enumerate() {
        if rel {
            found += 1;
            sum += found as f64 / (r + 1) as f64;
        }
    }
    (found > 0).then(|| sum / found as f64)
}

pub fn mean_average_precision(probes: &[EvalRecord], gallery: &[EvalRecord], exclusion: Exclusion) -> Result<MapResult> {
    let mut total = 0.0;
    let (mut evaluated, mut skipped) = (0, 0);
    for probe in probes {
        let order = ranked_gallery(probe, gallery, exclusion)?;
        let relevant: Vec<bool> = order.iter().map(|&i| gallery[i].identity == probe.identity).collect();
        match average_precision(&relevant) {
            Some(ap) => {
                total += ap;
                evaluated += 1;
            }
            None => skipped += 1,
        }
    }
    let map = if evaluated == 0 { 0.0 } else { 100.0 * total / evaluated as f64 };
    Ok(MapResult { map, evaluated, skipped })
}
