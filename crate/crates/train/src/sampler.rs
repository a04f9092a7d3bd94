//! Identity-balanced P x K batch sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Result, TrainError};
use crate::seed::rng_for;

const EPOCH_STREAM: u64 = 1;
const CLIP_STREAM: u64 = 2;

/// Deterministic P x K sampler over a list of items labelled by identity.
///
/// Batches are a pure function of `(seed, step)`, so a resumed run sees
/// the same stream as an uninterrupted one. Each epoch shuffles the
/// identities and cuts them into chunks of `p`; the last chunk is topped
/// up with identities from the start of the permutation. Within an epoch
/// each identity walks a shuffled list of its items, wrapping around when
/// it has fewer than needed.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    groups: Vec<(u64, Vec<usize>)>,
    p: usize,
    k: usize,
    seed: u64,
}

/// One sampled batch: item indices grouped by identity, `k` per identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub epoch: usize,
    pub identities: Vec<u64>,
    pub items: Vec<usize>,
}

impl BatchSampler {
    pub fn new(item_identities: &[u64], p: usize, k: usize, seed: u64) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(TrainError::InvalidConfig(format!("sampler needs p, k >= 1, got p={p} k={k}")));
        }
        let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, &id) in item_identities.iter().enumerate() {
            map.entry(id).or_default().push(i);
        }
        if map.len() < p {
            return Err(TrainError::InsufficientIdentities { needed: p, available: map.len() });
        }
        Ok(BatchSampler { groups: map.into_iter().collect(), p, k, seed })
    }

    pub fn batch_size(&self) -> usize {
        self.p * self.k
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.groups.len().div_ceil(self.p)
    }

    fn identity_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        order.shuffle(&mut rng_for(&[self.seed, EPOCH_STREAM, epoch as u64]));
        order
    }

    /// The batch drawn at training step `step`.
    pub fn batch(&self, step: usize) -> Batch {
        let per_epoch = self.batches_per_epoch();
        let (epoch, index) = (step / per_epoch, step % per_epoch);
        let order = self.identity_order(epoch);
        let start = index * self.p;
        let mut chosen: Vec<(usize, usize)> = order[start..(start + self.p).min(order.len())].iter().map(|&g| (g, 0)).collect();
        // top up the final chunk; these identities are on their second pass
        let short = self.p - chosen.len();
        chosen.extend(order[..short].iter().map(|&g| (g, 1)));
        let mut identities = Vec::with_capacity(self.p);
        let mut items = Vec::with_capacity(self.batch_size());
        for (g, pass) in chosen {
            let (id, members) = &self.groups[g];
            let mut list = members.clone();
            list.shuffle(&mut rng_for(&[self.seed, CLIP_STREAM, epoch as u64, *id]));
            identities.push(*id);
            items.extend((0..self.k).map(|i| list[(pass * self.k + i) % list.len()]));
        }
        Batch { epoch, identities, items }
    }

    /// Endless stream of batches starting at step 0.
    pub fn stream(&self) -> impl Iterator<Item = Batch> + '_ {
        (0..).map(move |s| self.batch(s))
    }
}
