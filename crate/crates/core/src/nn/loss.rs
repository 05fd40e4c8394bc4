use serde::{Deserialize, Serialize};

use super::model::NetworkModel;
use super::NnError;
use crate::scalar::Scalar;

/// Probabilities are clamped here before taking the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayForm {
    /// `λ Σ‖W⁽ℓ⁾‖²_F`, ordinary weight decay.
    #[default]
    SquaredFrobenius,
    /// `λ ‖W‖_F` over all weights, unsquared. Its gradient `λ W/‖W‖_F` is
    /// taken as zero at `W = 0`.
    FrobeniusAsWritten,
}

/// Cross-entropy of the true class plus a weight-decay term on the weights.
/// Biases are never decayed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub decay_form: DecayForm,
}

impl LossSpec {
    pub fn new(weight_decay: f64, decay_form: DecayForm) -> Self {
        Self {
            weight_decay,
            decay_form,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(NnError::Architecture(format!(
                "weight decay must be a non-negative number, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn decay_term<T: Scalar>(&self, model: &NetworkModel<T>) -> T {
        if self.weight_decay == 0.0 {
            return T::zero();
        }
        let ss = model.weight_sum_squares();
        let lambda = T::of(self.weight_decay);
        match self.decay_form {
            DecayForm::SquaredFrobenius => lambda * ss,
            DecayForm::FrobeniusAsWritten => lambda * ss.sqrt(),
        }
    }

    /// `c` such that the decay gradient is `c · W`.
    pub(crate) fn decay_gradient_coefficient<T: Scalar>(&self, model: &NetworkModel<T>) -> T {
        if self.weight_decay == 0.0 {
            return T::zero();
        }
        let lambda = T::of(self.weight_decay);
        match self.decay_form {
            DecayForm::SquaredFrobenius => T::of(2.0) * lambda,
            DecayForm::FrobeniusAsWritten => {
                let norm = model.weight_sum_squares().sqrt();
                if norm == T::zero() {
                    T::zero()
                } else {
                    lambda / norm
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue<T> {
    pub total: T,
    pub cross_entropy: T,
    pub decay: T,
    /// The true-class probability fell below the floor and was clamped.
    pub clamped: bool,
}

/// Loss of one labelled sample (labels are 0-based).
pub fn loss<T: Scalar>(
    model: &NetworkModel<T>,
    x: &[T],
    label: usize,
    spec: &LossSpec,
) -> Result<LossValue<T>, NnError> {
    let c = model.class_count();
    if label >= c {
        return Err(NnError::Label { label, classes: c });
    }
    let p = model.predict(x)?[label];
    let floor = T::of(PROBABILITY_FLOOR);
    let clamped = p < floor;
    if clamped {
        log::warn!("true-class probability {:e} clamped to {PROBABILITY_FLOOR:e}", p.as_f64());
    }
    let cross_entropy = -p.max(floor).ln();
    let decay = spec.decay_term(model);
    Ok(LossValue {
        total: cross_entropy + decay,
        cross_entropy,
        decay,
        clamped,
    })
}
