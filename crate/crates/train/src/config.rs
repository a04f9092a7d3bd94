//! Training configuration as line-oriented `key=value` text.
//!
//! Backbone keys are written unprefixed (see [`BackboneConfig::to_kv`]);
//! the remaining keys are listed in [`TRAIN_KEYS`].

use std::str::FromStr;

use cvvnet_core::DEFAULT_CLIP_LENGTH;
use cvvnet_model::{BackboneConfig, KvMap};
use sha2::{Digest, Sha256};

use crate::augment::AugmentConfig;
use crate::data::Selection;
use crate::error::{Result, TrainError};
use crate::loss::LossWeights;
use crate::schedule::ScheduleConfig;

pub const TRAIN_KEYS: &[&str] = &[
    "alpha",
    "beta",
    "margin",
    "base_lr",
    "max_lr",
    "total_steps",
    "warmup_frac",
    "weight_decay",
    "p",
    "k",
    "clip_length",
    "model_seed",
    "data_seed",
    "checkpoint_every",
    "augment_flip",
    "augment_rotate",
    "augment_erase",
    "train_views",
    "train_conditions",
    "train_repeats",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub backbone: BackboneConfig,
    pub loss: LossWeights,
    pub schedule: ScheduleConfig,
    /// Identities per batch.
    pub p: usize,
    /// Clips per identity.
    pub k: usize,
    pub clip_length: usize,
    pub model_seed: u64,
    pub data_seed: u64,
    /// Checkpoint period in steps; 0 keeps only the initial and final ones.
    pub checkpoint_every: usize,
    pub augment: AugmentConfig,
    pub selection: Selection,
}

impl Default for TrainConfig {
    /// Toy backbone, reference optimizer constants over 2,000 steps, 8 x 2 batches.
    fn default() -> Self {
        TrainConfig {
            backbone: BackboneConfig::toy(),
            loss: LossWeights::default(),
            schedule: ScheduleConfig::reference().with_total_steps(2_000),
            p: 8,
            k: 2,
            clip_length: DEFAULT_CLIP_LENGTH,
            model_seed: 0,
            data_seed: 0,
            checkpoint_every: 500,
            augment: AugmentConfig::default(),
            selection: Selection::all(),
        }
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(m: &KvMap, key: &str, default: &[T]) -> Result<Vec<T>>
where
    T: Clone,
{
    match m.get(key) {
        None => Ok(default.to_vec()),
        Some("") => Ok(Vec::new()),
        Some(raw) => raw
            .split(',')
            .map(|s| s.trim().parse::<T>().map_err(|_| TrainError::InvalidConfig(format!("bad {key} entry {s:?}"))))
            .collect(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.loss.validate()?;
        self.schedule.validate()?;
        if self.p < 2 || self.k < 1 || self.clip_length < 1 {
            return Err(TrainError::InvalidConfig(format!(
                "need p >= 2, k >= 1, clip_length >= 1; got p={} k={} clip_length={}",
                self.p, self.k, self.clip_length
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = self.backbone.to_kv();
        m.set("alpha", self.loss.alpha);
        m.set("beta", self.loss.beta);
        m.set("margin", self.loss.margin);
        m.set("base_lr", self.schedule.base_lr);
        m.set("max_lr", self.schedule.max_lr);
        m.set("total_steps", self.schedule.total_steps);
        m.set("warmup_frac", self.schedule.warmup_frac);
        m.set("weight_decay", self.schedule.weight_decay);
        m.set("p", self.p);
        m.set("k", self.k);
        m.set("clip_length", self.clip_length);
        m.set("model_seed", self.model_seed);
        m.set("data_seed", self.data_seed);
        m.set("checkpoint_every", self.checkpoint_every);
        m.set("augment_flip", self.augment.flip);
        m.set("augment_rotate", self.augment.rotate);
        m.set("augment_erase", self.augment.erase);
        m.set("train_views", join(&self.selection.views));
        m.set("train_conditions", join(&self.selection.conditions));
        m.set("train_repeats", join(&self.selection.repeats));
        m
    }

    /// Reads a configuration. Absent keys keep their [`Default`] values;
    /// unknown keys are rejected.
    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let backbone_keys = BackboneConfig::toy().to_kv();
        if let Some(k) = m.keys().find(|k| !backbone_keys.contains(k) && !TRAIN_KEYS.contains(k)) {
            return Err(TrainError::InvalidConfig(format!("unknown key {k:?}")));
        }
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            backbone: BackboneConfig::from_kv(m)?,
            loss: LossWeights {
                alpha: m.parsed_or("alpha", d.loss.alpha)?,
                beta: m.parsed_or("beta", d.loss.beta)?,
                margin: m.parsed_or("margin", d.loss.margin)?,
            },
            schedule: ScheduleConfig {
                base_lr: m.parsed_or("base_lr", d.schedule.base_lr)?,
                max_lr: m.parsed_or("max_lr", d.schedule.max_lr)?,
                total_steps: m.parsed_or("total_steps", d.schedule.total_steps)?,
                warmup_frac: m.parsed_or("warmup_frac", d.schedule.warmup_frac)?,
                weight_decay: m.parsed_or("weight_decay", d.schedule.weight_decay)?,
            },
            p: m.parsed_or("p", d.p)?,
            k: m.parsed_or("k", d.k)?,
            clip_length: m.parsed_or("clip_length", d.clip_length)?,
            model_seed: m.parsed_or("model_seed", d.model_seed)?,
            data_seed: m.parsed_or("data_seed", d.data_seed)?,
            checkpoint_every: m.parsed_or("checkpoint_every", d.checkpoint_every)?,
            augment: AugmentConfig {
                flip: m.parsed_or("augment_flip", d.augment.flip)?,
                rotate: m.parsed_or("augment_rotate", d.augment.rotate)?,
                erase: m.parsed_or("augment_erase", d.augment.erase)?,
            },
            selection: Selection {
                views: parse_list(m, "train_views", &d.selection.views)?,
                conditions: parse_list(m, "train_conditions", &d.selection.conditions)?,
                repeats: parse_list(m, "train_repeats", &d.selection.repeats)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvMap::parse(text)?)
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }

    /// Hex SHA-256 of the rendered configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
