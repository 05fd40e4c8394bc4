//! Run configuration documents, single training runs and sparsity sweeps.

mod config;
mod sweep;

pub use config::{ArchitectureRef, DataSpec, RunConfig};
pub use sweep::{run_sweep, write_sweep_csv, SweepRow, SweepSpec};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::iht::{run_iht, write_epoch_csv, RunMetrics, TrainData, TrainedModel};
use crate::model_io::{size_report, SizeReport};
use crate::nn::{Architecture, NetworkModel};
use crate::scalar::Scalar;
use crate::Error;

/// RNG stream used for weight initialization (training uses 0–2).
const INIT_STREAM: u64 = 3;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.sdnn";
pub const DENSE_MODEL_FILE: &str = "model.dense.sdnn";

/// Seeded initial weights for an architecture.
pub fn initial_model<T: Scalar>(arch: &Architecture, seed: u64) -> Result<NetworkModel<T>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    Ok(NetworkModel::init(arch, &mut rng)?)
}

#[derive(Serialize)]
struct Summary<'a> {
    #[serde(flatten)]
    metrics: &'a RunMetrics,
    size: SizeReport,
}

pub struct RunOutcome<T> {
    pub trained: TrainedModel<T>,
    pub size: SizeReport,
}

/// Trains one model as described by `cfg` on already-loaded data.
///
/// With `out` set, writes the epoch CSV, the JSON summary and both
/// checkpoints into that directory.
pub fn execute_run<T: Scalar>(
    cfg: &RunConfig,
    arch: &Architecture,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    out: Option<&Path>,
) -> Result<RunOutcome<T>, Error> {
    let model = initial_model(arch, cfg.train.seed)?;
    let trained = run_iht(model, &cfg.train, &cfg.plan, TrainData { train, test })?;
    let size = size_report(&trained.model);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_epoch_csv(&trained.metrics.epochs, dir.join(METRICS_FILE))?;
        let summary = Summary {
            metrics: &trained.metrics,
            size,
        };
        crate::write_file(
            &dir.join(SUMMARY_FILE),
            serde_json::to_string_pretty(&summary)?.as_bytes(),
        )?;
        crate::model_io::save_bitmask(&trained.model, dir.join(MODEL_FILE))?;
        crate::model_io::save_dense(&trained.model, dir.join(DENSE_MODEL_FILE))?;
    }
    Ok(RunOutcome { trained, size })
}
