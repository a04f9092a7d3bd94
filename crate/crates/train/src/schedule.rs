use std::f64::consts::PI;

use crate::error::{Result, TrainError};

/// Divisor giving the final learning rate from the base rate.
pub const FINAL_LR_DIVISOR: f64 = 25.0;

/// One-cycle learning-rate schedule plus the decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
    pub weight_decay: f64,
}

impl ScheduleConfig {
    /// AdamW at 1e-4 base, 6e-4 peak, 80k steps with 6% warm-up, decay 0.05.
    pub fn reference() -> Self {
        ScheduleConfig { base_lr: 1e-4, max_lr: 6e-4, total_steps: 80_000, warmup_frac: 0.06, weight_decay: 0.05 }
    }

    /// The same shape compressed to `total_steps`.
    pub fn with_total_steps(self, total_steps: usize) -> Self {
        ScheduleConfig { total_steps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr > 0.0
            && self.base_lr <= self.max_lr
            && self.max_lr.is_finite()
            && self.total_steps >= 1
            && self.warmup_frac > 0.0
            && self.warmup_frac < 1.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig(format!("invalid schedule {self:?}")))
        }
    }

    /// Step at which the peak rate is reached (may be fractional).
    pub fn warmup_steps(&self) -> f64 {
        self.warmup_frac * self.total_steps as f64
    }

    pub fn final_lr(&self) -> f64 {
        self.base_lr / FINAL_LR_DIVISOR
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::reference()
    }
}

/// Cosine interpolation from `from` (t = 0) to `to` (t = 1).
fn cosine(from: f64, to: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return from;
    }
    if t >= 1.0 {
        return to;
    }
    to + (from - to) * 0.5 * (1.0 + (PI * t).cos())
}

/// Learning rate at `step`: cosine ramp from `base_lr` to `max_lr` over the
/// warm-up, then cosine decay to `base_lr / 25` at `total_steps`.
pub fn lr_at_step(s: &ScheduleConfig, step: usize) -> Result<f64> {
    if step > s.total_steps {
        return Err(TrainError::StepOutOfRange { step, total: s.total_steps });
    }
    let warm = s.warmup_steps();
    let x = step as f64;
    Ok(if x <= warm {
        cosine(s.base_lr, s.max_lr, x / warm)
    } else {
        cosine(s.max_lr, s.final_lr(), (x - warm) / (s.total_steps as f64 - warm))
    })
}
