//! Adam with decoupled weight decay.

use std::collections::HashMap;

use cvvnet_autograd::{ParamId, ParamKind, ParamStore, Tensor};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.05 }
    }
}

/// Optimizer state: first and second moments per trainable tensor.
///
/// Decay is applied only to [`ParamKind::Weight`] tensors; biases and
/// normalization scales (`NoDecay`) are updated by the adaptive step alone.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    ids: Vec<ParamId>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let ids = store.trainable_ids();
        let m = ids.iter().map(|&id| Tensor::zeros(store.get(id).shape())).collect();
        let v = ids.iter().map(|&id| Tensor::zeros(store.get(id).shape())).collect();
        AdamW { config, step: 0, m, v, ids }
    }

    /// One update at learning rate `lr`. Tensors without a gradient are
    /// treated as having a zero gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &HashMap<ParamId, Tensor>, lr: f64) {
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (slot, &id) in self.ids.iter().enumerate() {
            let decay = store.entry(id).kind == ParamKind::Weight && weight_decay > 0.0;
            let grad = grads.get(&id);
            let (m, v) = (self.m[slot].data_mut(), self.v[slot].data_mut());
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = grad.map_or(0.0, |t| t.data()[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                if decay {
                    p[i] -= lr * weight_decay * p[i];
                }
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Moment tensors as `(name, tensor)` pairs, named `m.<param>` / `v.<param>`.
    pub fn state_tensors(&self, store: &ParamStore) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.ids.len() + 1);
        out.push(("step".to_string(), Tensor::scalar(self.step as f64)));
        for (slot, &id) in self.ids.iter().enumerate() {
            let name = &store.entry(id).name;
            out.push((format!("m.{name}"), self.m[slot].clone()));
            out.push((format!("v.{name}"), self.v[slot].clone()));
        }
        out
    }

    /// Restores moments saved by [`AdamW::state_tensors`] for the same store layout.
    pub fn restore(&mut self, store: &ParamStore, tensors: Vec<(String, Tensor)>) -> Result<()> {
        let map: HashMap<String, Tensor> = tensors.into_iter().collect();
        let step = map.get("step").ok_or_else(|| TrainError::InvalidConfig("optimizer state has no step".into()))?;
        self.step = step.item() as u64;
        for (slot, &id) in self.ids.iter().enumerate() {
            let name = &store.entry(id).name;
            for (prefix, dst) in [("m", &mut self.m[slot]), ("v", &mut self.v[slot])] {
                let key = format!("{prefix}.{name}");
                let t = map.get(&key).ok_or_else(|| TrainError::InvalidConfig(format!("optimizer state lacks {key}")))?;
                if t.shape() != dst.shape() {
                    return Err(TrainError::InvalidConfig(format!("optimizer state {key} has shape {:?}", t.shape())));
                }
                *dst = t.clone();
            }
        }
        Ok(())
    }
}
