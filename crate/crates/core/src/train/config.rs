use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::error::{Result, VgsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Write the checkpoint every this many epochs (the last epoch always).
    pub checkpoint_every: usize,
    pub grad_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 16,
            learning_rate: 2e-4,
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-8,
            seed: 0,
            shuffle: true,
            checkpoint_every: 1,
            grad_clip_norm: Some(2.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(VgsError::config("epochs", "must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(VgsError::config(
                "batch_size",
                format!(
                    "must be at least 2 for in-batch contrast, got {}",
                    self.batch_size
                ),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(VgsError::config(
                "learning_rate",
                "must be finite and non-negative",
            ));
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(VgsError::config("adam_betas", "must lie in [0, 1)"));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(VgsError::config("adam_eps", "must be positive"));
        }
        if self.checkpoint_every < 1 {
            return Err(VgsError::config("checkpoint_every", "must be at least 1"));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(VgsError::config("grad_clip_norm", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas[0],
            beta2: self.adam_betas[1],
            eps: self.adam_eps,
            clip_norm: self.grad_clip_norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("batch_size"));
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"epochs": 3, "grad_clip_norm": null}"#;
        let c: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!((c.epochs, c.grad_clip_norm, c.batch_size), (3, None, 16));
    }
}
