//! Sparse training by alternating hard thresholding with masked fine-tuning
//! and unconstrained restoration phases.

mod config;
mod mask;
mod plan;
mod trainer;

use std::path::Path;

pub use config::{ThresholdingMode, TrainConfig};
pub use mask::{
    change_ratio, random_threshold_model, threshold_model, Budgets, ChangeRatio, LayerMask, SupportMask,
};
pub use plan::{budget, layer_budget, progressive_ratio, SparsityPlan};
pub use trainer::{
    run_iht, train_plain, CycleMetrics, EpochRecord, Phase, RunMetrics, RunStatus, StepFailure, TrainData,
    TrainedModel, Trainer, DIVERGENCE_LOSS,
};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid sparsity plan: {0}")]
    Plan(String),
    #[error("mask mismatch: {0}")]
    MaskShape(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("diverged in {phase:?} phase (cycle {cycle}, epoch {epoch}): {reason}")]
    Diverged {
        phase: Phase,
        cycle: usize,
        epoch: usize,
        reason: String,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Writes the per-epoch records as CSV.
pub fn write_epoch_csv(records: &[EpochRecord], path: impl AsRef<Path>) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

/// Writes the run-level summary as pretty JSON.
pub fn write_summary_json(metrics: &RunMetrics, path: impl AsRef<Path>) -> Result<(), crate::Error> {
    let text = serde_json::to_string_pretty(metrics)?;
    crate::write_file(path.as_ref(), text.as_bytes())
}
