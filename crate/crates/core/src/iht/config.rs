use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{LossSpec, SgdConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdingMode {
    /// Keep the largest-magnitude weights.
    #[default]
    Hard,
    /// Keep a uniformly random subset of the same size (ablation).
    Random,
}

fn default_true() -> bool {
    true
}

fn default_batch() -> usize {
    32
}

/// Settings of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Epochs of each unconstrained phase (the initial one and every restore).
    pub s1: usize,
    /// Epochs of each masked fine-tuning phase.
    pub s2: usize,
    /// Number of thresholding events; the run ends on the last one's fine-tuning.
    pub cycle_count: usize,
    #[serde(default)]
    pub optimizer: SgdConfig,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholding: ThresholdingMode,
    /// Zero the momentum of truncated weights at thresholding and during
    /// masked fine-tuning.
    #[serde(default = "default_true")]
    pub momentum_reset: bool,
    /// Per-epoch horizontal flip probability for image-shaped samples.
    #[serde(default)]
    pub flip_probability: f64,
    /// Evaluate the whole training set after every epoch.
    #[serde(default = "default_true")]
    pub eval_train: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            s1: 5,
            s2: 15,
            cycle_count: 1,
            optimizer: SgdConfig::default(),
            loss: LossSpec::default(),
            batch_size: default_batch(),
            seed: 0,
            thresholding: ThresholdingMode::Hard,
            momentum_reset: true,
            flip_probability: 0.0,
            eval_train: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.s1 == 0 {
            return bad("s1 must be at least 1");
        }
        if self.s2 == 0 {
            return bad("s2 must be at least 1");
        }
        if self.cycle_count == 0 {
            return bad("cycle_count must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !o.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad("flip_probability must be in [0, 1]");
        }
        self.loss
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }

    /// `s1 + cycle_count·s2 + (cycle_count − 1)·s1`.
    pub fn total_epochs(&self) -> usize {
        self.cycle_count * (self.s1 + self.s2)
    }
}
