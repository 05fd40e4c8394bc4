#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdnn::nn::{loss, Architecture, LayerKind, LossSpec, NetworkModel};

fn param(m: &mut NetworkModel<f64>, layer: usize, which: usize, i: usize) -> &mut f64 {
    let l = &mut m.layers_mut()[layer];
    if which == 0 {
        &mut l.weights.data_mut()[i]
    } else {
        &mut l.bias.data_mut()[i]
    }
}

/// Worst relative disagreement between backprop and central differences
/// over every weight and bias. The denominator is floored at `1e-8` so that
/// parameters with an exactly-zero gradient compare absolutely.
pub fn max_gradient_error(model: &NetworkModel<f64>, x: &[f64], label: usize, spec: &LossSpec, h: f64) -> (f64, usize) {
    let (_, grads) = model.batch_gradient([(x, label)], spec).unwrap();
    let f = |m: &NetworkModel<f64>| loss(m, x, label, spec).unwrap().total;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut probe = model.clone();
    for li in 0..model.layers().len() {
        for which in 0..2 {
            let n = if which == 0 { model.layers()[li].weights.len() } else { model.layers()[li].bias.len() };
            for i in 0..n {
                let orig = *param(&mut probe, li, which, i);
                *param(&mut probe, li, which, i) = orig + h;
                let up = f(&probe);
                *param(&mut probe, li, which, i) = orig - h;
                let down = f(&probe);
                *param(&mut probe, li, which, i) = orig;
                let fd = (up - down) / (2.0 * h);
                let an = if which == 0 { grads[li].weights.data()[i] } else { grads[li].bias.data()[i] };
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                worst = worst.max(err);
                checked += 1;
            }
        }
    }
    (worst, checked)
}

/// Seeded Glorot weights and small random biases.
pub fn random_model(arch: &Architecture, seed: u64) -> NetworkModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = NetworkModel::<f64>::init(arch, &mut rng).unwrap();
    for l in m.layers_mut() {
        for b in l.bias.data_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    m
}

pub fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Conv, ReLU, max pool, second conv, global average pool, dense head.
pub fn conv_pool_gap_arch() -> Architecture {
    Architecture {
        input_shape: vec![1, 6, 6],
        layers: vec![
            LayerKind::Conv2d { in_channels: 1, out_channels: 3, kernel: 3, stride: 1, padding: 1 },
            LayerKind::Relu,
            LayerKind::MaxPool { size: 2, stride: None },
            LayerKind::Conv2d { in_channels: 3, out_channels: 4, kernel: 2, stride: 1, padding: 0 },
            LayerKind::GlobalAvgPool,
            LayerKind::FullyConnected { inputs: 4, outputs: 3 },
            LayerKind::Softmax,
        ],
    }
}

/// Strided padded conv followed by flatten and a dense head.
pub fn strided_flatten_arch() -> Architecture {
    Architecture {
        input_shape: vec![2, 5, 5],
        layers: vec![
            LayerKind::Conv2d { in_channels: 2, out_channels: 2, kernel: 3, stride: 2, padding: 1 },
            LayerKind::Relu,
            LayerKind::Flatten,
            LayerKind::FullyConnected { inputs: 18, outputs: 3 },
            LayerKind::Softmax,
        ],
    }
}

/// Reference encoder written directly from the stream layout.
pub fn reference_encode(model: &NetworkModel<f32>) -> Vec<u8> {
    let mut out = b"SDNN".to_vec();
    out.extend(1u16.to_le_bytes());
    out.extend((model.layers().len() as u16).to_le_bytes());
    for l in model.layers() {
        out.push(l.kind.tag());
        out.push(l.weights.shape().len() as u8);
        for d in l.weights.shape() {
            out.extend((*d as u32).to_le_bytes());
        }
        let w = l.weights.data();
        out.extend((w.len() as u64).to_le_bytes());
        for chunk in w.chunks(8) {
            let mut byte = 0u8;
            for (bit, v) in chunk.iter().enumerate() {
                if *v != 0.0 {
                    byte |= 1 << bit;
                }
            }
            out.push(byte);
        }
        let nz: Vec<f32> = w.iter().copied().filter(|v| *v != 0.0).collect();
        out.extend((nz.len() as u64).to_le_bytes());
        nz.iter().for_each(|v| out.extend(v.to_le_bytes()));
        out.extend((l.bias.len() as u64).to_le_bytes());
        l.bias.data().iter().for_each(|v| out.extend(v.to_le_bytes()));
    }
    out
}

/// Model with a random architecture and per-layer density drawn from
/// {all zero, fully dense, random}.
pub fn random_codec_model(rng: &mut ChaCha8Rng) -> NetworkModel<f32> {
    let arch = match rng.random_range(0..3) {
        0 => conv_pool_gap_arch(),
        _ => {
            let depth = rng.random_range(2..5);
            let sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..20)).collect();
            Architecture::mlp(&sizes)
        }
    };
    let mut m = NetworkModel::<f32>::zeros(&arch).unwrap();
    for l in m.layers_mut() {
        let density = match rng.random_range(0..3) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };
        for w in l.weights.data_mut() {
            if rng.random_bool(density) {
                *w = rng.random_range(-3.0f32..3.0);
                if *w == 0.0 {
                    *w = 1.0;
                }
            }
        }
        for b in l.bias.data_mut() {
            *b = rng.random_range(-1.0f32..1.0);
        }
    }
    m
}
