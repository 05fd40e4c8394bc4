//! Layer kinds with their single-sample forward and backward passes.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Layer kind plus its hyperparameters. This is also the JSON form of one
/// entry in an architecture's `layers` list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    FullyConnected {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        #[serde(default)]
        stride: Option<usize>,
    },
    GlobalAvgPool,
    Softmax,
    Flatten,
}

fn one() -> usize {
    1
}

impl LayerKind {
    /// Stable one-byte tag used by the checkpoint format.
    pub fn tag(&self) -> u8 {
        match self {
            LayerKind::FullyConnected { .. } => 1,
            LayerKind::Conv2d { .. } => 2,
            LayerKind::Relu => 3,
            LayerKind::MaxPool { .. } => 4,
            LayerKind::GlobalAvgPool => 5,
            LayerKind::Softmax => 6,
            LayerKind::Flatten => 7,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::FullyConnected { .. } => "fully_connected",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "max_pool",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Softmax => "softmax",
            LayerKind::Flatten => "flatten",
        }
    }

    pub fn has_parameters(&self) -> bool {
        matches!(
            self,
            LayerKind::FullyConnected { .. } | LayerKind::Conv2d { .. }
        )
    }

    /// Weight and bias shapes; `[0]` for parameter-free kinds.
    pub fn parameter_shapes(&self) -> (Vec<usize>, Vec<usize>) {
        match *self {
            LayerKind::FullyConnected { inputs, outputs } => (vec![outputs, inputs], vec![outputs]),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ),
            _ => (vec![0], vec![0]),
        }
    }

    /// `(fan_in, fan_out)` for weight initialization.
    pub fn fans(&self) -> (usize, usize) {
        match *self {
            LayerKind::FullyConnected { inputs, outputs } => (inputs, outputs),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * kernel * kernel, out_channels * kernel * kernel),
            _ => (0, 0),
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerKind::FullyConnected { inputs, outputs } => {
                if input != [inputs] {
                    return Err(format!("expects input [{inputs}], got {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = chw(input)?;
                if c != in_channels {
                    return Err(format!("expects {in_channels} input channels, got {c}"));
                }
                if kernel == 0 || stride == 0 {
                    return Err("kernel and stride must be positive".into());
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(format!("kernel {kernel} larger than padded input {h}x{w}"));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerKind::MaxPool { size, stride } => {
                let [c, h, w] = chw(input)?;
                let stride = stride.unwrap_or(size);
                if size == 0 || stride == 0 {
                    return Err("pool size and stride must be positive".into());
                }
                if h < size || w < size {
                    return Err(format!("pool size {size} larger than input {h}x{w}"));
                }
                Ok(vec![c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            LayerKind::GlobalAvgPool => {
                let [c, _, _] = chw(input)?;
                Ok(vec![c])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Softmax => {
                if input.len() != 1 {
                    return Err(format!("expects a vector input, got {input:?}"));
                }
                Ok(input.to_vec())
            }
        }
    }
}

fn chw(shape: &[usize]) -> Result<[usize; 3], String> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(format!("expects a [channels, height, width] input, got {shape:?}")),
    }
}

/// One layer: kind, weights `W` and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Layer<T> {
    /// Layer with zero parameters of the right shapes.
    pub fn zeros(kind: LayerKind) -> Self {
        let (ws, bs) = kind.parameter_shapes();
        Self {
            kind,
            weights: Tensor::zeros(&ws),
            bias: Tensor::zeros(&bs),
        }
    }

    /// Forward pass; `out_shape` is the precomputed output shape.
    pub fn forward(&self, x: &Tensor<T>, out_shape: &[usize]) -> Tensor<T> {
        let mut out = Tensor::zeros(out_shape);
        let xs = x.data();
        let o = out.data_mut();
        match self.kind {
            LayerKind::FullyConnected { inputs, .. } => {
                let w = self.weights.data();
                for (r, (dst, b)) in o.iter_mut().zip(self.bias.data()).enumerate() {
                    let row = &w[r * inputs..(r + 1) * inputs];
                    *dst = *b + dot(row, xs);
                }
            }
            LayerKind::Conv2d {
                in_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (h, wd) = (x.shape()[1], x.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let w = self.weights.data();
                for (oc, b) in self.bias.data().iter().enumerate() {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = *b;
                            for c in 0..in_channels {
                                for ky in 0..kernel {
                                    let Some(iy) = tap(oy, ky, stride, padding, h) else {
                                        continue;
                                    };
                                    for kx in 0..kernel {
                                        let Some(ix) = tap(ox, kx, stride, padding, wd) else {
                                            continue;
                                        };
                                        acc += w[((oc * in_channels + c) * kernel + ky) * kernel + kx]
                                            * xs[(c * h + iy) * wd + ix];
                                    }
                                }
                            }
                            o[(oc * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
            }
            LayerKind::Relu => {
                for (dst, v) in o.iter_mut().zip(xs) {
                    *dst = if *v > T::zero() { *v } else { T::zero() };
                }
            }
            LayerKind::MaxPool { size, stride } => {
                let stride = stride.unwrap_or(size);
                let (h, wd) = (x.shape()[1], x.shape()[2]);
                let (c, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let at = pool_argmax(xs, ch, oy, ox, size, stride, h, wd);
                            o[(ch * oh + oy) * ow + ox] = xs[at];
                        }
                    }
                }
            }
            LayerKind::GlobalAvgPool => {
                let plane = x.shape()[1] * x.shape()[2];
                let n = T::of(plane as f64);
                for (ch, dst) in o.iter_mut().enumerate() {
                    *dst = xs[ch * plane..(ch + 1) * plane].iter().copied().sum::<T>() / n;
                }
            }
            LayerKind::Flatten => o.copy_from_slice(xs),
            LayerKind::Softmax => softmax_into(xs, o),
        }
        out
    }

    /// Backward pass for one sample. Accumulates parameter gradients into
    /// `grad_w` / `grad_b` and returns the gradient with respect to the input
    /// when `want_input` is set.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        grad_out: &[T],
        grad_w: &mut [T],
        grad_b: &mut [T],
        want_input: bool,
    ) -> Option<Tensor<T>> {
        let xs = x.data();
        let mut gin = if want_input {
            Some(Tensor::zeros(x.shape()))
        } else {
            None
        };
        match self.kind {
            LayerKind::FullyConnected { inputs, .. } => {
                let w = self.weights.data();
                for (r, g) in grad_out.iter().enumerate() {
                    if *g == T::zero() {
                        continue;
                    }
                    grad_b[r] += *g;
                    axpy(*g, xs, &mut grad_w[r * inputs..(r + 1) * inputs]);
                    if let Some(gi) = gin.as_mut() {
                        axpy(*g, &w[r * inputs..(r + 1) * inputs], gi.data_mut());
                    }
                }
            }
            LayerKind::Conv2d {
                in_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (h, wd) = (x.shape()[1], x.shape()[2]);
                let (oc_n, oh, ow) = (y.shape()[0], y.shape()[1], y.shape()[2]);
                let w = self.weights.data();
                for oc in 0..oc_n {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = grad_out[(oc * oh + oy) * ow + ox];
                            if g == T::zero() {
                                continue;
                            }
                            grad_b[oc] += g;
                            for c in 0..in_channels {
                                for ky in 0..kernel {
                                    let Some(iy) = tap(oy, ky, stride, padding, h) else {
                                        continue;
                                    };
                                    for kx in 0..kernel {
                                        let Some(ix) = tap(ox, kx, stride, padding, wd) else {
                                            continue;
                                        };
                                        let wi = ((oc * in_channels + c) * kernel + ky) * kernel + kx;
                                        let xi = (c * h + iy) * wd + ix;
                                        grad_w[wi] += g * xs[xi];
                                        if let Some(gi) = gin.as_mut() {
                                            gi.data_mut()[xi] += g * w[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerKind::Relu => {
                if let Some(gi) = gin.as_mut() {
                    for ((d, v), g) in gi.data_mut().iter_mut().zip(xs).zip(grad_out) {
                        *d = if *v > T::zero() { *g } else { T::zero() };
                    }
                }
            }
            LayerKind::MaxPool { size, stride } => {
                if let Some(gi) = gin.as_mut() {
                    let stride = stride.unwrap_or(size);
                    let (h, wd) = (x.shape()[1], x.shape()[2]);
                    let (c, oh, ow) = (y.shape()[0], y.shape()[1], y.shape()[2]);
                    let d = gi.data_mut();
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let at = pool_argmax(xs, ch, oy, ox, size, stride, h, wd);
                                d[at] += grad_out[(ch * oh + oy) * ow + ox];
                            }
                        }
                    }
                }
            }
            LayerKind::GlobalAvgPool => {
                if let Some(gi) = gin.as_mut() {
                    let plane = x.shape()[1] * x.shape()[2];
                    let n = T::of(plane as f64);
                    for (ch, chunk) in gi.data_mut().chunks_mut(plane).enumerate() {
                        chunk.fill(grad_out[ch] / n);
                    }
                }
            }
            LayerKind::Flatten => {
                if let Some(gi) = gin.as_mut() {
                    gi.data_mut().copy_from_slice(grad_out);
                }
            }
            LayerKind::Softmax => {
                if let Some(gi) = gin.as_mut() {
                    let p = y.data();
                    let inner: T = p.iter().zip(grad_out).map(|(p, g)| *p * *g).sum();
                    for ((d, p), g) in gi.data_mut().iter_mut().zip(p).zip(grad_out) {
                        *d = *p * (*g - inner);
                    }
                }
            }
        }
        gin
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (d, v) in y.iter_mut().zip(x) {
        *d += alpha * *v;
    }
}

/// Input coordinate read by output position `o` at kernel offset `k`.
#[inline]
fn tap(o: usize, k: usize, stride: usize, padding: usize, extent: usize) -> Option<usize> {
    let i = (o * stride + k).checked_sub(padding)?;
    (i < extent).then_some(i)
}

/// Flat index of the first maximum inside one pooling window.
#[allow(clippy::too_many_arguments)]
#[inline]
fn pool_argmax<T: Scalar>(
    xs: &[T],
    ch: usize,
    oy: usize,
    ox: usize,
    size: usize,
    stride: usize,
    h: usize,
    w: usize,
) -> usize {
    let mut best = (ch * h + oy * stride) * w + ox * stride;
    for ky in 0..size {
        for kx in 0..size {
            let at = (ch * h + oy * stride + ky) * w + ox * stride + kx;
            if xs[at] > xs[best] {
                best = at;
            }
        }
    }
    best
}

pub(crate) fn softmax_into<T: Scalar>(logits: &[T], out: &mut [T]) {
    let m = logits.iter().fold(T::neg_infinity(), |a, b| a.max(*b));
    let mut z = T::zero();
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (*l - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}
