use serde::Serialize;

use super::loss::PROBABILITY_FLOOR;
use super::model::NetworkModel;
use super::NnError;
use crate::data::Dataset;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    /// Fraction of samples whose arg-max class matches the label.
    pub accuracy: f64,
    /// Mean cross-entropy, without the decay term.
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate<T: Scalar>(model: &NetworkModel<T>, data: &Dataset<T>) -> Result<Evaluation, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let c = model.class_count();
    let floor = T::of(PROBABILITY_FLOOR);
    let mut correct = 0;
    let mut loss = 0.0;
    for (x, label) in data.iter() {
        if label >= c {
            return Err(NnError::Label { label, classes: c });
        }
        let p = model.predict(x)?;
        if argmax(&p) == label {
            correct += 1;
        }
        loss += (-p[label].max(floor).ln()).as_f64();
    }
    let total = data.len();
    Ok(Evaluation {
        accuracy: correct as f64 / total as f64,
        mean_loss: loss / total as f64,
        correct,
        total,
    })
}
