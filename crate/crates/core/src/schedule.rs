//! Learning-rate schedule: linear warm-up over the first dataset pass, then
//! cosine decay to zero at the final step.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupCosineSchedule {
    base_lr: f64,
    warmup_steps: usize,
    total_steps: usize,
}

impl WarmupCosineSchedule {
    /// `warmup_steps` is one epoch's step count; `total_steps` covers the
    /// whole run.
    pub fn new(base_lr: f64, warmup_steps: usize, total_steps: usize) -> Result<Self> {
        if base_lr <= 0.0 {
            return Err(Error::invalid("base_lr", "must be positive"));
        }
        if warmup_steps == 0 || total_steps < warmup_steps {
            return Err(Error::invalid(
                "steps",
                "need 1 <= warmup_steps <= total_steps",
            ));
        }
        Ok(WarmupCosineSchedule {
            base_lr,
            warmup_steps,
            total_steps,
        })
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    /// Learning rate for a zero-based step index.
    ///
    /// Warm-up ramps linearly and reaches `base_lr` exactly at the last step
    /// of the first pass; cosine decay then reaches 0 at the final step.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay_span = (self.total_steps - self.warmup_steps).saturating_sub(1).max(1);
        let progress =
            ((step - self.warmup_steps) as f64 / decay_span as f64).clamp(0.0, 1.0);
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
