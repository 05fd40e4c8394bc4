//! Training sessions and the alternating threshold / restore loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ThresholdingMode, TrainConfig};
use super::mask::{change_ratio, random_threshold_model, threshold_model, Budgets, ChangeRatio, SupportMask};
use super::plan::{layer_budget, SparsityPlan};
use super::TrainError;
use crate::data::{augment_flip, Dataset};
use crate::nn::{evaluate, sgd_step, Evaluation, NetworkModel, NnError, OptimizerState};
use crate::scalar::Scalar;

/// Batch losses above this abort the run.
pub const DIVERGENCE_LOSS: f64 = 1e6;

const THRESHOLD_STREAM: u64 = 1;
const FLIP_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a, T> {
    pub train: &'a Dataset<T>,
    pub test: Option<&'a Dataset<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Unconstrained warm-up before the first thresholding.
    Init,
    /// Masked fine-tuning after a thresholding event.
    Finetune,
    /// Unconstrained training after restoring truncated connections.
    Restore,
    /// Baseline training outside the thresholding loop.
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub cycle: usize,
    /// Mean of the minibatch losses seen during the epoch.
    pub batch_loss: f64,
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub nonzero_weights: usize,
}

/// One model under training plus its optimizer and data order.
pub struct Trainer<'a, T> {
    pub model: NetworkModel<T>,
    pub opt: OptimizerState<T>,
    cfg: &'a TrainConfig,
    data: TrainData<'a, T>,
    shuffle_rng: ChaCha8Rng,
    flip_rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
    pub records: Vec<EpochRecord>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(model: NetworkModel<T>, cfg: &'a TrainConfig, data: TrainData<'a, T>) -> Result<Self, TrainError> {
        cfg.validate()?;
        let input: usize = model.input_shape().iter().product();
        for ds in std::iter::once(data.train).chain(data.test) {
            if ds.is_empty() {
                return Err(TrainError::Nn(NnError::EmptyDataset));
            }
            if ds.sample_len() != input {
                return Err(TrainError::Config(format!(
                    "samples have {} values, model expects {input}",
                    ds.sample_len()
                )));
            }
            if ds.class_count() > model.class_count() {
                return Err(TrainError::Config(format!(
                    "dataset has {} classes, model outputs {}",
                    ds.class_count(),
                    model.class_count()
                )));
            }
        }
        if cfg.flip_probability > 0.0 && data.train.sample_shape().len() < 2 {
            return Err(TrainError::Config(
                "flip augmentation needs image-shaped training samples".into(),
            ));
        }
        let opt = OptimizerState::new(&model, cfg.optimizer);
        let mut flip_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        flip_rng.set_stream(FLIP_STREAM);
        Ok(Self {
            model,
            opt,
            cfg,
            data,
            shuffle_rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            flip_rng,
            epoch: 0,
            records: Vec::new(),
        })
    }

    /// One optimizer step on the given training indices. With a mask, the
    /// off-support weights (and their momentum, under `momentum_reset`) are
    /// zeroed again right after the update.
    pub fn step(&mut self, data: &Dataset<T>, batch: &[usize], mask: Option<&SupportMask>) -> Result<f64, StepFailure> {
        let samples = batch.iter().map(|&i| data.sample(i));
        let (loss, grads) = self.model.batch_gradient(samples, &self.cfg.loss).map_err(|e| match e {
            NnError::NonFinite { what } => StepFailure::Diverged(format!("non-finite {what}")),
            other => StepFailure::Nn(other),
        })?;
        let loss = loss.as_f64();
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(StepFailure::Diverged(format!("batch loss {loss:e}")));
        }
        sgd_step(&mut self.model, &grads, &mut self.opt);
        if let Some(mask) = mask {
            let velocity = self.cfg.momentum_reset.then_some(&mut self.opt);
            mask.apply(&mut self.model, velocity);
        }
        if !self.model.is_finite() {
            return Err(StepFailure::Diverged("non-finite parameters after update".into()));
        }
        Ok(loss)
    }

    fn run_epoch(&mut self, mask: Option<&SupportMask>, phase: Phase, cycle: usize) -> Result<(), TrainError> {
        let fail = |epoch: usize, f: StepFailure| match f {
            StepFailure::Nn(e) => TrainError::Nn(e),
            StepFailure::Diverged(reason) => TrainError::Diverged {
                phase,
                cycle,
                epoch,
                reason,
            },
        };
        let epoch = self.epoch + 1;
        let flipped;
        let data = if self.cfg.flip_probability > 0.0 {
            flipped = augment_flip(self.data.train, self.cfg.flip_probability, &mut self.flip_rng)
                .map_err(|e| TrainError::Config(e.to_string()))?;
            &flipped
        } else {
            self.data.train
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(self.cfg.batch_size) {
            total += self.step(data, batch, mask).map_err(|f| fail(epoch, f))?;
            batches += 1;
        }
        self.epoch = epoch;

        let ev = |d: &Dataset<T>| evaluate(&self.model, d).map_err(TrainError::Nn);
        let train = if self.cfg.eval_train { Some(ev(self.data.train)?) } else { None };
        let test = match self.data.test {
            Some(t) => Some(ev(t)?),
            None => None,
        };
        self.records.push(EpochRecord {
            epoch,
            phase,
            cycle,
            batch_loss: total / batches as f64,
            train_loss: train.map(|e| e.mean_loss),
            train_accuracy: train.map(|e| e.accuracy),
            test_loss: test.map(|e| e.mean_loss),
            test_accuracy: test.map(|e| e.accuracy),
            nonzero_weights: self.model.nonzero_weights().iter().sum(),
        });
        Ok(())
    }

    /// Unconstrained epochs.
    pub fn train_epochs(&mut self, epochs: usize, phase: Phase, cycle: usize) -> Result<(), TrainError> {
        for _ in 0..epochs {
            self.run_epoch(None, phase, cycle)?;
        }
        Ok(())
    }

    /// Fine-tunes only the weights inside `mask`; biases train freely.
    pub fn finetune_masked(&mut self, mask: &SupportMask, epochs: usize, cycle: usize) -> Result<(), TrainError> {
        if !mask.confines(&self.model) {
            return Err(TrainError::MaskShape(
                "model has nonzero weights outside the fine-tuning mask".into(),
            ));
        }
        for _ in 0..epochs {
            self.run_epoch(Some(mask), Phase::Finetune, cycle)?;
        }
        Ok(())
    }

    /// Lifts all constraints and trains every parameter.
    pub fn restore_and_train(&mut self, epochs: usize, cycle: usize) -> Result<(), TrainError> {
        self.train_epochs(epochs, Phase::Restore, cycle)
    }

    /// Applies a thresholding event and, under `momentum_reset`, clears the
    /// momentum of the truncated weights.
    pub fn threshold(&mut self, budgets: &Budgets, mode: ThresholdingMode, rng: &mut ChaCha8Rng) -> Result<SupportMask, TrainError> {
        let mask = match mode {
            ThresholdingMode::Hard => threshold_model(&mut self.model, budgets)?,
            ThresholdingMode::Random => random_threshold_model(&mut self.model, budgets, rng)?,
        };
        if self.cfg.momentum_reset {
            mask.apply(&mut self.model, Some(&mut self.opt));
        }
        Ok(mask)
    }

    pub fn evaluate_train(&self) -> Result<Evaluation, TrainError> {
        evaluate(&self.model, self.data.train).map_err(TrainError::Nn)
    }

    pub fn evaluate_test(&self) -> Result<Option<Evaluation>, TrainError> {
        self.data
            .test
            .map(|t| evaluate(&self.model, t).map_err(TrainError::Nn))
            .transpose()
    }
}

#[derive(Debug)]
pub enum StepFailure {
    Diverged(String),
    Nn(NnError),
}

/// What happened at one thresholding event and the fine-tuning after it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    /// Epochs completed when the thresholding happened.
    pub epoch: usize,
    /// Ratio applied per weight layer.
    pub ratios: Vec<f64>,
    /// Budget `k_ℓ` per weight layer.
    pub budgets: Vec<usize>,
    /// Nonzero weights per weight layer right after thresholding.
    pub nonzeros_after_threshold: Vec<usize>,
    /// Relative to the previous event; absent for the first.
    pub change_ratio: Option<ChangeRatio>,
    pub finetune_train_accuracy: Option<f64>,
    pub finetune_test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged {
        phase: Phase,
        cycle: usize,
        epoch: usize,
        reason: String,
    },
}

/// Run-level metrics; the per-epoch records go to CSV separately.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub status: RunStatus,
    pub total_epochs: usize,
    pub epochs_completed: usize,
    /// Weights per weight layer.
    pub layer_sizes: Vec<usize>,
    pub cycles: Vec<CycleMetrics>,
    /// Final budgets per weight layer (empty for plain training).
    pub final_budgets: Vec<usize>,
    /// Final nonzero weights per weight layer.
    pub final_nonzeros: Vec<usize>,
    pub final_train: Option<Evaluation>,
    pub final_test: Option<Evaluation>,
    #[serde(skip)]
    pub epochs: Vec<EpochRecord>,
}

impl RunMetrics {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }
}

pub struct TrainedModel<T> {
    pub model: NetworkModel<T>,
    pub metrics: RunMetrics,
}

fn weight_layer_sizes<T: Scalar>(model: &NetworkModel<T>) -> Vec<usize> {
    model
        .weight_layers()
        .into_iter()
        .map(|i| model.layers()[i].weights.len())
        .collect()
}

fn weight_layer_nonzeros<T: Scalar>(model: &NetworkModel<T>) -> Vec<usize> {
    let nz = model.nonzero_weights();
    model.weight_layers().into_iter().map(|i| nz[i]).collect()
}

fn finish<T: Scalar>(
    trainer: Trainer<'_, T>,
    total_epochs: usize,
    cycles: Vec<CycleMetrics>,
    final_budgets: Vec<usize>,
    outcome: Result<(), TrainError>,
) -> Result<TrainedModel<T>, TrainError> {
    let status = match outcome {
        Ok(()) => RunStatus::Completed,
        Err(TrainError::Diverged {
            phase,
            cycle,
            epoch,
            reason,
        }) => {
            log::warn!("run diverged in {phase:?} phase, cycle {cycle}, epoch {epoch}: {reason}");
            RunStatus::Diverged {
                phase,
                cycle,
                epoch,
                reason,
            }
        }
        Err(e) => return Err(e),
    };
    let (final_train, final_test) = if matches!(status, RunStatus::Completed) {
        (Some(trainer.evaluate_train()?), trainer.evaluate_test()?)
    } else {
        (None, None)
    };
    let metrics = RunMetrics {
        status,
        total_epochs,
        epochs_completed: trainer.epoch,
        layer_sizes: weight_layer_sizes(&trainer.model),
        cycles,
        final_budgets,
        final_nonzeros: weight_layer_nonzeros(&trainer.model),
        final_train,
        final_test,
        epochs: trainer.records,
    };
    Ok(TrainedModel {
        model: trainer.model,
        metrics,
    })
}

/// Plain unconstrained training for `epochs` epochs: the dense baseline.
pub fn train_plain<T: Scalar>(
    model: NetworkModel<T>,
    cfg: &TrainConfig,
    data: TrainData<'_, T>,
    epochs: usize,
) -> Result<TrainedModel<T>, TrainError> {
    let mut trainer = Trainer::new(model, cfg, data)?;
    let outcome = trainer.train_epochs(epochs, Phase::Plain, 0);
    finish(trainer, epochs, Vec::new(), Vec::new(), outcome)
}

/// Iterative hard thresholding.
///
/// Trains `s1` epochs unconstrained, then repeats `cycle_count` times:
/// threshold every weight layer to its budget and fine-tune the retained
/// weights for `s2` epochs; between events, restore the truncated connections
/// and train everything for `s1` epochs. The run ends with a fine-tuning
/// phase, so a completed run satisfies `‖W⁽ℓ⁾‖₀ ≤ k_ℓ` for every layer.
///
/// Budgets follow the linear ramp of the plan from the first event (start
/// ratio) to the last (final ratio). Divergence stops the run and is reported
/// in the metrics rather than as an error.
pub fn run_iht<T: Scalar>(
    model: NetworkModel<T>,
    cfg: &TrainConfig,
    plan: &SparsityPlan,
    data: TrainData<'_, T>,
) -> Result<TrainedModel<T>, TrainError> {
    let weight_layers = model.weight_layers();
    plan.validate(weight_layers.len())?;
    let mut trainer = Trainer::new(model, cfg, data)?;
    let mut threshold_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    threshold_rng.set_stream(THRESHOLD_STREAM);

    let period = cfg.s1 + cfg.s2;
    let horizon = (cfg.cycle_count - 1) * period;
    let sizes = weight_layer_sizes(&trainer.model);
    let mut cycles = Vec::with_capacity(cfg.cycle_count);
    let mut final_budgets = Vec::new();
    let mut prev_mask: Option<SupportMask> = None;

    let mut body = || -> Result<(), TrainError> {
        trainer.train_epochs(cfg.s1, Phase::Init, 0)?;
        for cycle in 1..=cfg.cycle_count {
            let t = (cycle - 1) * period;
            let ratios: Vec<f64> = (0..sizes.len()).map(|l| plan.ratio_at(l, t, horizon)).collect();
            let ks: Vec<usize> = sizes
                .iter()
                .enumerate()
                .map(|(l, &p)| layer_budget(plan, l, p, t, horizon))
                .collect();
            let mut budgets: Budgets = vec![None; trainer.model.layers().len()];
            for (&layer, &k) in weight_layers.iter().zip(&ks) {
                budgets[layer] = Some(k);
            }

            let epoch = trainer.epoch;
            let mask = trainer.threshold(&budgets, cfg.thresholding, &mut threshold_rng)?;
            let change = prev_mask.as_ref().map(|p| change_ratio(p, &mask)).transpose()?;
            cycles.push(CycleMetrics {
                cycle,
                epoch,
                ratios,
                budgets: ks.clone(),
                nonzeros_after_threshold: weight_layer_nonzeros(&trainer.model),
                change_ratio: change,
                finetune_train_accuracy: None,
                finetune_test_accuracy: None,
            });
            final_budgets = ks;

            trainer.finetune_masked(&mask, cfg.s2, cycle)?;
            if let (Some(last), Some(rec)) = (cycles.last_mut(), trainer.records.last()) {
                last.finetune_train_accuracy = rec.train_accuracy;
                last.finetune_test_accuracy = rec.test_accuracy;
            }
            if cycle < cfg.cycle_count {
                trainer.restore_and_train(cfg.s1, cycle)?;
            }
            prev_mask = Some(mask);
        }
        Ok(())
    };
    let outcome = body();
    finish(trainer, cfg.total_epochs(), cycles, final_budgets, outcome)
}
