//! Training engine: ADAM, gradient clipping, early stopping on a dev
//! metric, seeded end-to-end reproducibility.

mod adam;
mod trainer;

pub use adam::{adam_step, clip_global_norm, gather_grads, OptimState};
pub use trainer::{train, EpochRecord, TrainOutcome};

use serde::{Deserialize, Serialize};

/// How the 1e-5 weight decay enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecayMode {
    /// Added to the gradient before the moment updates (classic L2).
    #[default]
    Coupled,
    /// Applied directly to the weights after the ADAM step.
    Decoupled,
}

/// Optimization and stopping hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    /// Stop after this many epochs without a dev improvement.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Beam width for the per-epoch dev decode; 1 = greedy.
    pub beam_for_dev: usize,
}

impl TrainConfig {
    pub fn default_with_seed(seed: u64) -> TrainConfig {
        TrainConfig {
            lr: 4e-4,
            batch_size: 64,
            clip_norm: 1.0,
            weight_decay: 1e-5,
            decay_mode: DecayMode::Coupled,
            patience: 10,
            max_epochs: 100,
            seed,
            beam_for_dev: 1,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.lr <= 0.0 || self.clip_norm <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::config("lr and clip_norm must be positive"));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::config(
                "batch_size, patience, and max_epochs must be at least 1",
            ));
        }
        if self.beam_for_dev == 0 {
            return Err(Error::config("beam_for_dev must be at least 1"));
        }
        Ok(())
    }
}
