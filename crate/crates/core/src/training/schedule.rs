//! Optimizer hyperparameters and the warmup / multi-step decay schedule.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Optimization settings. The learning rate ramps linearly over
/// `warmup_steps`, then drops by `decay_factor` at every milestone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub decay_milestones: Vec<u64>,
    pub decay_factor: f64,
    /// Micro-batches whose gradients are averaged into one update.
    pub accumulation: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta1: 0.9,
            beta2: 0.998,
            eps: 1e-9,
            base_lr: 1e-3,
            warmup_steps: 8000,
            decay_milestones: vec![16000, 24000],
            decay_factor: 0.5,
            accumulation: 4,
            max_steps: 1000,
            seed: 0,
            batch_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(CoreError::config(format!(
                    "{name} must lie in (0, 1), got {beta}"
                )));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CoreError::config(format!(
                "eps must be positive and finite, got {}",
                self.eps
            )));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(CoreError::config(format!(
                "base_lr must be positive and finite, got {}",
                self.base_lr
            )));
        }
        if self.warmup_steps == 0 {
            return Err(CoreError::config("warmup_steps must be at least 1"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(CoreError::config(format!(
                "decay_factor must lie in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.decay_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::config(
                "decay_milestones must be strictly increasing",
            ));
        }
        if self.decay_milestones.first() == Some(&0) {
            return Err(CoreError::config("decay milestones are 1-based steps"));
        }
        if self.accumulation == 0 {
            return Err(CoreError::config("accumulation must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(CoreError::config("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Learning rate for a 1-based update step: linear ramp to `base_lr` during
/// warmup, then one `decay_factor` multiplication per milestone passed.
pub fn lr_at(step: u64, config: &TrainConfig) -> f64 {
    assert!(step >= 1, "update steps are 1-based");
    if step <= config.warmup_steps {
        config.base_lr * step as f64 / config.warmup_steps as f64
    } else {
        let passed = config
            .decay_milestones
            .iter()
            .filter(|&&m| m <= step)
            .count();
        config.base_lr * config.decay_factor.powi(passed as i32)
    }
}
