use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the emotion loss; the NLL gets `1 - alpha`.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub pretrain_steps: usize,
    /// Write a metrics record every this many steps.
    pub log_every: usize,
    /// Validation accuracy every this many steps; 0 disables it.
    pub eval_every: usize,
    /// Checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            learning_rate: 0.5,
            batch_size: 16,
            max_steps: 1000,
            seed: 1,
            clip_norm: Some(5.0),
            pretrain_steps: 0,
            log_every: 1,
            eval_every: 100,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Batch size used with the full-size preset.
    pub const PAPER_BATCH_SIZE: usize = 128;

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig {
                alpha: 1.1,
                ..Default::default()
            },
            TrainConfig {
                alpha: -0.1,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                clip_norm: Some(0.0),
                ..Default::default()
            },
            TrainConfig {
                log_every: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }
}
