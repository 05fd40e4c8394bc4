use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerKind};
use super::loss::{LossSpec, PROBABILITY_FLOOR};
use super::NnError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// JSON architecture document: input shape and an ordered layer list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerKind>,
}

impl Architecture {
    /// `784 → 128 → 10` multilayer perceptron.
    pub fn mlp(sizes: &[usize]) -> Self {
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            layers.push(LayerKind::FullyConnected {
                inputs: pair[0],
                outputs: pair[1],
            });
            if i + 2 < sizes.len() {
                layers.push(LayerKind::Relu);
            }
        }
        layers.push(LayerKind::Softmax);
        Self {
            input_shape: vec![sizes[0]],
            layers,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        serde_json::from_str(text).map_err(|e| NnError::Architecture(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| NnError::Architecture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Shapes of every activation `X⁽⁰⁾..X⁽ᴸ⁾`, validating the chain.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::Architecture(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        let n = self.layers.len();
        match self.layers.last() {
            Some(LayerKind::Softmax) => {}
            _ => return Err(NnError::Architecture("the last layer must be softmax".into())),
        }
        if let Some(i) = self.layers[..n - 1]
            .iter()
            .position(|k| *k == LayerKind::Softmax)
        {
            return Err(NnError::Architecture(format!(
                "softmax may only be the final layer (found at layer {i})"
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, kind) in self.layers.iter().enumerate() {
            let next = kind
                .output_shape(shapes.last().unwrap())
                .map_err(|message| NnError::Shape { layer: i, message })?;
            shapes.push(next);
        }
        Ok(shapes)
    }
}

/// Weight and bias tensors of one layer. Used for parameters, gradients and
/// optimizer velocities alike.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensors<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ParamTensors<T> {
    pub fn zeros_like(layer: &Layer<T>) -> Self {
        Self {
            weights: Tensor::zeros(layer.weights.shape()),
            bias: Tensor::zeros(layer.bias.shape()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.is_finite()
    }

    fn scale(&mut self, s: T) {
        self.weights.data_mut().iter_mut().for_each(|v| *v *= s);
        self.bias.data_mut().iter_mut().for_each(|v| *v *= s);
    }
}

/// Per-layer gradient tensors mirroring a model's parameters.
pub type Gradients<T> = Vec<ParamTensors<T>>;

pub fn zero_gradients<T: Scalar>(model: &NetworkModel<T>) -> Gradients<T> {
    model.layers().iter().map(ParamTensors::zeros_like).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel<T> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> NetworkModel<T> {
    /// All-zero model for an architecture.
    pub fn zeros(arch: &Architecture) -> Result<Self, NnError> {
        let shapes = arch.activation_shapes()?;
        Ok(Self {
            layers: arch.layers.iter().cloned().map(Layer::zeros).collect(),
            input_shape: arch.input_shape.clone(),
            shapes,
        })
    }

    /// Weights uniform in `±√(6/(fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self, NnError> {
        let mut model = Self::zeros(arch)?;
        for layer in &mut model.layers {
            let (fan_in, fan_out) = layer.kind.fans();
            if fan_in + fan_out == 0 {
                continue;
            }
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(model)
    }

    /// Builds a model from explicit layers, checking parameter shapes.
    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer<T>>) -> Result<Self, NnError> {
        let arch = Architecture {
            input_shape: input_shape.clone(),
            layers: layers.iter().map(|l| l.kind.clone()).collect(),
        };
        let shapes = arch.activation_shapes()?;
        for (i, l) in layers.iter().enumerate() {
            let (ws, bs) = l.kind.parameter_shapes();
            if l.weights.shape() != ws.as_slice() || l.bias.shape() != bs.as_slice() {
                return Err(NnError::Shape {
                    layer: i,
                    message: format!(
                        "parameters {:?}/{:?} do not match expected {ws:?}/{bs:?}",
                        l.weights.shape(),
                        l.bias.shape()
                    ),
                });
            }
        }
        Ok(Self {
            layers,
            input_shape,
            shapes,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(|l| l.kind.clone()).collect(),
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.shapes.last().map(|s| s[0]).unwrap_or(0)
    }

    /// Indices of layers that carry weights.
    pub fn weight_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].kind.has_parameters())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn nonzero_weights(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.weights.count_nonzero()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }

    /// `Σ_ℓ ‖W⁽ℓ⁾‖²_F` over weights only.
    pub fn weight_sum_squares(&self) -> T {
        self.layers.iter().map(|l| l.weights.sum_squares()).sum()
    }

    /// Runs the network on one sample, returning `X⁽⁰⁾..X⁽ᴸ⁾`. The last entry
    /// is the softmax probability vector.
    pub fn forward(&self, x: &[T]) -> Result<Vec<Tensor<T>>, NnError> {
        let expected: usize = self.input_shape.iter().product();
        if x.len() != expected {
            return Err(NnError::Shape {
                layer: 0,
                message: format!(
                    "input has {} values, expected shape {:?}",
                    x.len(),
                    self.input_shape
                ),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(Tensor::from_vec(&self.input_shape, x.to_vec()).expect("length checked"));
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(&acts[i], &self.shapes[i + 1]);
            acts.push(next);
        }
        Ok(acts)
    }

    /// Class probabilities for one sample.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        Ok(self.forward(x)?.pop().expect("at least one layer").into_data())
    }

    /// Accumulates the cross-entropy gradient of one sample into `grads`.
    ///
    /// `activations` must come from [`forward`](Self::forward) on this model.
    /// The weight-decay term is not included; see [`add_decay_gradient`].
    pub fn backward_into(
        &self,
        activations: &[Tensor<T>],
        label: usize,
        grads: &mut Gradients<T>,
    ) -> Result<(), NnError> {
        let c = self.class_count();
        if label >= c {
            return Err(NnError::Label { label, classes: c });
        }
        let n = self.layers.len();
        // Softmax + cross-entropy: dL/dlogits = p − e_y.
        let mut delta: Vec<T> = activations[n].data().to_vec();
        delta[label] -= T::one();
        let first_needed = self
            .layers
            .iter()
            .position(|l| l.kind.has_parameters())
            .unwrap_or(n);
        for i in (0..n - 1).rev() {
            if i < first_needed {
                break;
            }
            let g = &mut grads[i];
            let gin = self.layers[i].backward(
                &activations[i],
                &activations[i + 1],
                &delta,
                g.weights.data_mut(),
                g.bias.data_mut(),
                i > first_needed,
            );
            match gin {
                Some(t) => delta = t.into_data(),
                None => break,
            }
        }
        Ok(())
    }

    /// Gradients of the per-sample loss (cross-entropy plus decay).
    pub fn backward(
        &self,
        activations: &[Tensor<T>],
        label: usize,
        spec: &LossSpec,
    ) -> Result<Gradients<T>, NnError> {
        let mut grads = zero_gradients(self);
        self.backward_into(activations, label, &mut grads)?;
        add_decay_gradient(self, spec, &mut grads);
        check_finite(&grads)?;
        Ok(grads)
    }

    /// Mean loss and mean gradient over a batch of `(sample, label)` pairs,
    /// with the decay term counted once.
    pub fn batch_gradient<'a, I>(
        &self,
        batch: I,
        spec: &LossSpec,
    ) -> Result<(T, Gradients<T>), NnError>
    where
        I: IntoIterator<Item = (&'a [T], usize)>,
    {
        let mut grads = zero_gradients(self);
        let mut total = T::zero();
        let mut n = 0usize;
        for (x, label) in batch {
            let acts = self.forward(x)?;
            let p = acts.last().unwrap().data()[label.min(self.class_count() - 1)];
            total += -p.max(T::of(PROBABILITY_FLOOR)).ln();
            self.backward_into(&acts, label, &mut grads)?;
            n += 1;
        }
        if n == 0 {
            return Err(NnError::EmptyDataset);
        }
        let inv = T::one() / T::of(n as f64);
        grads.iter_mut().for_each(|g| g.scale(inv));
        add_decay_gradient(self, spec, &mut grads);
        check_finite(&grads)?;
        Ok((total * inv + spec.decay_term(self), grads))
    }
}

/// Adds the gradient of the weight-decay term to `grads` (weights only).
pub fn add_decay_gradient<T: Scalar>(model: &NetworkModel<T>, spec: &LossSpec, grads: &mut Gradients<T>) {
    let coef = spec.decay_gradient_coefficient(model);
    if coef == T::zero() {
        return;
    }
    for (g, l) in grads.iter_mut().zip(model.layers()) {
        for (d, w) in g.weights.data_mut().iter_mut().zip(l.weights.data()) {
            *d += coef * *w;
        }
    }
}

fn check_finite<T: Scalar>(grads: &Gradients<T>) -> Result<(), NnError> {
    match grads.iter().position(|g| !g.is_finite()) {
        Some(layer) => Err(NnError::NonFinite {
            what: format!("gradient of layer {layer}"),
        }),
        None => Ok(()),
    }
}
