use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use super::{execute_run, RunConfig};
use crate::data::Dataset;
use crate::iht::{RunStatus, SparsityPlan};
use crate::nn::Architecture;
use crate::scalar::Scalar;
use crate::Error;

/// Accuracy-versus-sparsity sweep: one run per ratio, same config and seed.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub ratios: Vec<f64>,
    pub config: RunConfig,
    pub out: Option<PathBuf>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.ratios.is_empty() {
            return Err(Error::Config("sweep needs at least one ratio".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("sweep ratio {r} not in [0, 1)")));
        }
        if self.ratios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "sweep ratios must be strictly increasing: {:?}",
                self.ratios
            )));
        }
        Ok(())
    }

    /// Output directory of the run at `ratio`.
    pub fn run_dir(&self, ratio: f64) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join(format!("r{ratio:.3}")))
    }
}

/// One CSV row. Empty fields mark a run that failed or diverged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub final_train_acc: Option<f64>,
    pub final_test_acc: Option<f64>,
    pub nonzeros: Option<usize>,
    /// Size of the bitmask checkpoint.
    pub bytes: Option<usize>,
    /// `completed`, `diverged: ...` or `failed: ...`.
    #[serde(skip)]
    pub outcome: String,
}

fn sweep_one<T: Scalar>(
    spec: &SweepSpec,
    arch: &Architecture,
    ratio: f64,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
) -> SweepRow {
    let mut cfg = spec.config.clone();
    cfg.plan = SparsityPlan::uniform(ratio);
    let dir = spec.run_dir(ratio);
    match execute_run(&cfg, arch, train, test, dir.as_deref()) {
        Ok(run) => {
            let m = &run.trained.metrics;
            let outcome = match &m.status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::Diverged { reason, .. } => format!("diverged: {reason}"),
            };
            SweepRow {
                ratio,
                final_train_acc: m.final_train.as_ref().map(|e| e.accuracy),
                final_test_acc: m.final_test.as_ref().map(|e| e.accuracy),
                nonzeros: Some(run.size.nonzeros),
                bytes: Some(run.size.bitmask_bytes),
                outcome,
            }
        }
        Err(e) => {
            log::error!("sweep run at ratio {ratio} failed: {e}");
            SweepRow {
                ratio,
                final_train_acc: None,
                final_test_acc: None,
                nonzeros: None,
                bytes: None,
                outcome: format!("failed: {e}"),
            }
        }
    }
}

/// Runs every ratio of the sweep with at most `jobs` runs at a time.
///
/// A failing run yields a row with empty fields; the others still run.
/// Rows come back in the order of `spec.ratios`.
pub fn run_sweep<T: Scalar>(
    spec: &SweepSpec,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    jobs: usize,
) -> Result<Vec<SweepRow>, Error> {
    spec.validate()?;
    let arch = spec.config.architecture()?;
    let n = spec.ratios.len();
    let slots: Vec<Mutex<Option<SweepRow>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let row = sweep_one(spec, &arch, spec.ratios[i], train, test);
                *slots[i].lock().unwrap() = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect();
    if let Some(dir) = &spec.out {
        write_sweep_csv(&rows, dir.join("sweep.csv"))?;
    }
    Ok(rows)
}

/// Columns: ratio, final_train_acc, final_test_acc, nonzeros, bytes.
pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
