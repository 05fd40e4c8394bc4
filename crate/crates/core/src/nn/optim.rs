use serde::{Deserialize, Serialize};

use super::model::{Gradients, NetworkModel, ParamTensors};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }
}

/// SGD with momentum: `v ← μv − η g`, `w ← w + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub velocity: Vec<ParamTensors<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(model: &NetworkModel<T>, cfg: SgdConfig) -> Self {
        Self {
            learning_rate: T::of(cfg.learning_rate),
            momentum: T::of(cfg.momentum),
            velocity: model.layers().iter().map(ParamTensors::zeros_like).collect(),
        }
    }
}

pub fn sgd_step<T: Scalar>(model: &mut NetworkModel<T>, grads: &Gradients<T>, opt: &mut OptimizerState<T>) {
    let (lr, mu) = (opt.learning_rate, opt.momentum);
    for ((layer, g), v) in model
        .layers_mut()
        .iter_mut()
        .zip(grads)
        .zip(opt.velocity.iter_mut())
    {
        update(layer.weights.data_mut(), g.weights.data(), v.weights.data_mut(), lr, mu);
        update(layer.bias.data_mut(), g.bias.data(), v.bias.data_mut(), lr, mu);
    }
}

#[inline]
fn update<T: Scalar>(p: &mut [T], g: &[T], v: &mut [T], lr: T, mu: T) {
    for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v - lr * *g;
        *p += *v;
    }
}
