//! Per-layer support masks and the thresholding events that produce them.

use rand::Rng;
use serde::Serialize;

use super::TrainError;
use crate::ght::top_k_support;
use crate::nn::{NetworkModel, OptimizerState};
use crate::scalar::Scalar;

/// Boolean mask over one layer's weights; `true` marks a retained connection.
/// Empty for parameter-free layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMask {
    pub shape: Vec<usize>,
    pub bits: Vec<bool>,
}

impl LayerMask {
    pub fn full(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            bits: vec![true; shape.iter().product()],
        }
    }

    fn from_indices(shape: &[usize], keep: &[usize]) -> Self {
        let mut bits = vec![false; shape.iter().product()];
        for &i in keep {
            bits[i] = true;
        }
        Self {
            shape: shape.to_vec(),
            bits,
        }
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Masks `F⁽ℓ⁾` for every layer of a model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportMask {
    pub layers: Vec<LayerMask>,
}

impl SupportMask {
    /// All-true masks (empty for parameter-free layers).
    pub fn full<T: Scalar>(model: &NetworkModel<T>) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| {
                    if l.weights.is_empty() {
                        LayerMask {
                            shape: l.weights.shape().to_vec(),
                            bits: Vec::new(),
                        }
                    } else {
                        LayerMask::full(l.weights.shape())
                    }
                })
                .collect(),
        }
    }

    pub fn popcounts(&self) -> Vec<usize> {
        self.layers.iter().map(LayerMask::popcount).collect()
    }

    /// Zeroes weights (and, with `velocity`, their momentum) outside the mask.
    pub fn apply<T: Scalar>(&self, model: &mut NetworkModel<T>, velocity: Option<&mut OptimizerState<T>>) {
        for (layer, mask) in model.layers_mut().iter_mut().zip(&self.layers) {
            for (w, keep) in layer.weights.data_mut().iter_mut().zip(&mask.bits) {
                if !keep {
                    *w = T::zero();
                }
            }
        }
        if let Some(opt) = velocity {
            for (v, mask) in opt.velocity.iter_mut().zip(&self.layers) {
                for (x, keep) in v.weights.data_mut().iter_mut().zip(&mask.bits) {
                    if !keep {
                        *x = T::zero();
                    }
                }
            }
        }
    }

    /// True when every weight outside the mask is exactly zero.
    pub fn confines<T: Scalar>(&self, model: &NetworkModel<T>) -> bool {
        model.layers().iter().zip(&self.layers).all(|(l, m)| {
            l.weights
                .data()
                .iter()
                .zip(&m.bits)
                .all(|(w, keep)| *keep || *w == T::zero())
        })
    }
}

/// Per-layer budgets aligned with the model's layers; `None` for
/// parameter-free layers.
pub type Budgets = Vec<Option<usize>>;

fn check_budgets<T: Scalar>(model: &NetworkModel<T>, budgets: &Budgets) -> Result<(), TrainError> {
    if budgets.len() != model.layers().len() {
        return Err(TrainError::Plan(format!(
            "{} budgets for {} layers",
            budgets.len(),
            model.layers().len()
        )));
    }
    for (i, (l, b)) in model.layers().iter().zip(budgets).enumerate() {
        if l.kind.has_parameters() && b.is_none() {
            return Err(TrainError::Plan(format!("no budget for weight layer {i}")));
        }
    }
    Ok(())
}

/// Keeps the `k_ℓ` largest-magnitude weights of each layer, zeroing the rest.
/// Biases are never touched. Returns the retained index sets.
pub fn threshold_model<T: Scalar>(
    model: &mut NetworkModel<T>,
    budgets: &Budgets,
) -> Result<SupportMask, TrainError> {
    check_budgets(model, budgets)?;
    let mut layers = Vec::with_capacity(budgets.len());
    for (i, (layer, k)) in model.layers_mut().iter_mut().zip(budgets).enumerate() {
        let shape = layer.weights.shape().to_vec();
        match k {
            Some(k) if !layer.weights.is_empty() => {
                let keep = top_k_support(layer.weights.data(), *k).map_err(|e| {
                    TrainError::NonFinite(format!("weights of layer {i} at index {}", e.index))
                })?;
                let mask = LayerMask::from_indices(&shape, &keep);
                for (w, on) in layer.weights.data_mut().iter_mut().zip(&mask.bits) {
                    if !on {
                        *w = T::zero();
                    }
                }
                layers.push(mask);
            }
            _ => layers.push(LayerMask {
                shape,
                bits: Vec::new(),
            }),
        }
    }
    Ok(SupportMask { layers })
}

/// Like [`threshold_model`], but keeps a uniformly random size-`k_ℓ` subset.
pub fn random_threshold_model<T: Scalar, R: Rng + ?Sized>(
    model: &mut NetworkModel<T>,
    budgets: &Budgets,
    rng: &mut R,
) -> Result<SupportMask, TrainError> {
    check_budgets(model, budgets)?;
    let mut layers = Vec::with_capacity(budgets.len());
    for (layer, k) in model.layers_mut().iter_mut().zip(budgets) {
        let shape = layer.weights.shape().to_vec();
        let p = layer.weights.len();
        match k {
            Some(k) if p > 0 => {
                let keep = rand::seq::index::sample(rng, p, (*k).min(p)).into_vec();
                let mask = LayerMask::from_indices(&shape, &keep);
                for (w, on) in layer.weights.data_mut().iter_mut().zip(&mask.bits) {
                    if !on {
                        *w = T::zero();
                    }
                }
                layers.push(mask);
            }
            _ => layers.push(LayerMask {
                shape,
                bits: Vec::new(),
            }),
        }
    }
    Ok(SupportMask { layers })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChangeRatio {
    /// `|F_new \ F_prev| / |F_new|` per layer; `None` for parameter-free layers.
    pub per_layer: Vec<Option<f64>>,
    /// Per-layer ratios averaged with weights `P_ℓ`.
    pub aggregate: f64,
}

/// Fraction of each retained support that is new relative to the previous
/// thresholding event.
pub fn change_ratio(prev: &SupportMask, new: &SupportMask) -> Result<ChangeRatio, TrainError> {
    if prev.layers.len() != new.layers.len() {
        return Err(TrainError::MaskShape(format!(
            "{} layers vs {} layers",
            prev.layers.len(),
            new.layers.len()
        )));
    }
    let mut per_layer = Vec::with_capacity(new.layers.len());
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (a, b)) in prev.layers.iter().zip(&new.layers).enumerate() {
        if a.shape != b.shape || a.bits.len() != b.bits.len() {
            return Err(TrainError::MaskShape(format!(
                "layer {i}: {:?} vs {:?}",
                a.shape, b.shape
            )));
        }
        let k = b.popcount();
        if b.bits.is_empty() || k == 0 {
            per_layer.push(None);
            continue;
        }
        let entering = a.bits.iter().zip(&b.bits).filter(|(p, n)| **n && !**p).count();
        let r = entering as f64 / k as f64;
        let weight = b.bits.len() as f64;
        num += weight * r;
        den += weight;
        per_layer.push(Some(r));
    }
    Ok(ChangeRatio {
        per_layer,
        aggregate: if den > 0.0 { num / den } else { 0.0 },
    })
}
