//! Checkpoint format storing, per layer, one presence bit per weight plus
//! the nonzero weights packed in order.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SDNN"  version:u16 = 1  layer_count:u16
//! per layer:
//!   kind:u8  rank:u8  dims:u32 × rank  P:u64
//!   mask: ceil(P/8) bytes, bit i (LSB-first) set iff weight i is stored
//!   nnz:u64  values: nnz × f32
//!   bias_count:u64  bias: bias_count × f32
//! ```
//!
//! A bitmask stream sets exactly the nonzero weights. A dense stream sets
//! every bit and stores zeros verbatim. Values are narrowed to `f32`.

use std::path::Path;

use serde::Serialize;

use crate::nn::{Architecture, NetworkModel};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SDNN";
pub const VERSION: u16 = 1;
pub const FILE_EXTENSION: &str = "sdnn";

/// Bytes of the stream header (magic, version, layer count).
pub const STREAM_HEADER_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("bad magic {found:?} at byte 0")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported version {version} at byte 4")]
    Version { version: u16 },
    #[error("stream truncated at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("mask popcount {popcount} but {values} values at byte {offset}")]
    CountMismatch {
        offset: usize,
        popcount: usize,
        values: usize,
    },
    #[error("layer at byte {offset}: {message}")]
    Layer { offset: usize, message: String },
    #[error("{extra} trailing bytes after byte {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("checkpoint does not fit architecture: {0}")]
    Architecture(String),
}

/// One decoded layer record.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerRecord<T> {
    pub kind_tag: u8,
    pub weight_shape: Vec<usize>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub layers: Vec<LayerRecord<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_model(model: &NetworkModel<T>) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| LayerRecord {
                kind_tag: l.kind.tag(),
                weight_shape: l.weights.shape().to_vec(),
                weights: l.weights.data().to_vec(),
                bias: l.bias.data().to_vec(),
            })
            .collect();
        Self { layers }
    }

    pub fn encode_bitmask(&self) -> Vec<u8> {
        encode(&checkpoint_views(self), false)
    }

    pub fn encode_dense(&self) -> Vec<u8> {
        encode(&checkpoint_views(self), true)
    }

    pub fn size_report(&self) -> SizeReport {
        report(&checkpoint_views(self))
    }

    /// Builds a model of the given architecture from the decoded weights.
    pub fn into_model(self, arch: &Architecture) -> Result<NetworkModel<T>, CodecError> {
        let mut model = NetworkModel::zeros(arch).map_err(|e| CodecError::Architecture(e.to_string()))?;
        if model.layers().len() != self.layers.len() {
            return Err(CodecError::Architecture(format!(
                "{} layers in checkpoint, {} in architecture",
                self.layers.len(),
                model.layers().len()
            )));
        }
        for (i, (layer, rec)) in model.layers_mut().iter_mut().zip(self.layers).enumerate() {
            if layer.kind.tag() != rec.kind_tag {
                return Err(CodecError::Architecture(format!(
                    "layer {i}: checkpoint kind tag {} but architecture has {}",
                    rec.kind_tag,
                    layer.kind.name()
                )));
            }
            if layer.weights.shape() != rec.weight_shape.as_slice() || layer.bias.len() != rec.bias.len() {
                return Err(CodecError::Architecture(format!(
                    "layer {i}: checkpoint weights {:?} / bias {} vs architecture {:?} / {}",
                    rec.weight_shape,
                    rec.bias.len(),
                    layer.weights.shape(),
                    layer.bias.len()
                )));
            }
            layer.weights = Tensor::from_vec(&rec.weight_shape, rec.weights).expect("shape checked");
            let bias_shape = layer.bias.shape().to_vec();
            layer.bias = Tensor::from_vec(&bias_shape, rec.bias).expect("length checked");
        }
        Ok(model)
    }
}

/// Borrowed view of one layer, shared by models and decoded checkpoints.
struct LayerView<'a, T> {
    tag: u8,
    shape: &'a [usize],
    weights: &'a [T],
    bias: &'a [T],
}

fn model_views<T: Scalar>(model: &NetworkModel<T>) -> Vec<LayerView<'_, T>> {
    model
        .layers()
        .iter()
        .map(|l| LayerView {
            tag: l.kind.tag(),
            shape: l.weights.shape(),
            weights: l.weights.data(),
            bias: l.bias.data(),
        })
        .collect()
}

fn checkpoint_views<T>(ck: &Checkpoint<T>) -> Vec<LayerView<'_, T>> {
    ck.layers
        .iter()
        .map(|l| LayerView {
            tag: l.kind_tag,
            shape: &l.weight_shape,
            weights: &l.weights,
            bias: &l.bias,
        })
        .collect()
}

fn encode<T: Scalar>(layers: &[LayerView<'_, T>], dense: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(report(layers).bitmask_bytes);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u16).to_le_bytes());
    for layer in layers {
        out.push(layer.tag);
        out.push(layer.shape.len() as u8);
        for d in layer.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        let w = layer.weights;
        out.extend_from_slice(&(w.len() as u64).to_le_bytes());
        let mut mask = vec![0u8; w.len().div_ceil(8)];
        let mut values = Vec::new();
        for (i, v) in w.iter().enumerate() {
            if dense || *v != T::zero() {
                mask[i / 8] |= 1 << (i % 8);
                values.push(v.as_f64() as f32);
            }
        }
        out.extend_from_slice(&mask);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(layer.bias.len() as u64).to_le_bytes());
        for v in layer.bias {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

/// Sparse encoding: mask bits mark the nonzero weights (exact `== 0` test).
pub fn encode_bitmask<T: Scalar>(model: &NetworkModel<T>) -> Vec<u8> {
    encode(&model_views(model), false)
}

/// Dense encoding: every mask bit set, all weights stored.
pub fn encode_dense<T: Scalar>(model: &NetworkModel<T>) -> Vec<u8> {
    encode(&model_views(model), true)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let left = self.bytes.len() - self.pos;
        if n > left {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n - left,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CodecError> {
        let need = n.checked_mul(4).ok_or(CodecError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })?;
        Ok(self
            .take(need)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes a bitmask or dense stream. No partial result on error.
pub fn decode_bitmask<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| CodecError::BadMagic {
        found: bytes[..bytes.len().min(4)].to_vec(),
    })?;
    if magic != MAGIC {
        return Err(CodecError::BadMagic { found: magic.to_vec() });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CodecError::Version { version });
    }
    let count = r.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let start = r.pos;
        let kind_tag = r.u8()?;
        if !(1..=7).contains(&kind_tag) {
            return Err(CodecError::Layer {
                offset: start,
                message: format!("unknown kind tag {kind_tag}"),
            });
        }
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let p_at = r.pos;
        let p = r.u64()? as usize;
        if shape.iter().product::<usize>() != p {
            return Err(CodecError::Layer {
                offset: p_at,
                message: format!("parameter count {p} does not match dims {shape:?}"),
            });
        }
        let mask_at = r.pos;
        let mask = r.take(p.div_ceil(8))?;
        if p % 8 != 0 && mask[p / 8] >> (p % 8) != 0 {
            return Err(CodecError::Layer {
                offset: mask_at + p / 8,
                message: "mask bits set past the last parameter".into(),
            });
        }
        let popcount = mask.iter().map(|b| b.count_ones() as usize).sum::<usize>();
        let nnz_at = r.pos;
        let nnz = r.u64()? as usize;
        if nnz != popcount {
            return Err(CodecError::CountMismatch {
                offset: nnz_at,
                popcount,
                values: nnz,
            });
        }
        let values = r.f32s(nnz)?;
        let nb = r.u64()? as usize;
        let bias = r.f32s(nb)?;

        let mut weights = vec![T::zero(); p];
        let mut it = values.into_iter();
        for (i, w) in weights.iter_mut().enumerate() {
            if mask[i / 8] >> (i % 8) & 1 == 1 {
                *w = T::of(it.next().expect("popcount checked") as f64);
            }
        }
        layers.push(LayerRecord {
            kind_tag,
            weight_shape: shape,
            weights,
            bias: bias.into_iter().map(|v| T::of(v as f64)).collect(),
        });
    }
    if r.pos != bytes.len() {
        return Err(CodecError::Trailing {
            offset: r.pos,
            extra: bytes.len() - r.pos,
        });
    }
    Ok(Checkpoint { layers })
}

/// Storage accounting for a model, dense versus bitmask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SizeReport {
    /// Weights in the model.
    pub parameters: usize,
    /// Nonzero weights.
    pub nonzeros: usize,
    /// `4 · Σ P_ℓ`
    pub dense_bytes: usize,
    /// Stream header plus per-layer framing (kind, rank, dims, counts).
    pub header_bytes: usize,
    /// `Σ ceil(P_ℓ / 8)`
    pub mask_bytes: usize,
    /// `4 · Σ nnz_ℓ`
    pub value_bytes: usize,
    pub bias_bytes: usize,
    /// Exact length of the bitmask stream.
    pub bitmask_bytes: usize,
    /// `dense_bytes / bitmask_bytes`
    pub ratio: f64,
    /// `dense_bytes / (mask_bytes + value_bytes)`, ignoring framing and biases.
    pub payload_ratio: f64,
    /// `parameters / nonzeros`, the parameter-count view of compression.
    pub parameter_ratio: f64,
}

pub fn size_report<T: Scalar>(model: &NetworkModel<T>) -> SizeReport {
    report(&model_views(model))
}

fn report<T: Scalar>(layers: &[LayerView<'_, T>]) -> SizeReport {
    let mut r = SizeReport {
        parameters: 0,
        nonzeros: 0,
        dense_bytes: 0,
        header_bytes: STREAM_HEADER_BYTES,
        mask_bytes: 0,
        value_bytes: 0,
        bias_bytes: 0,
        bitmask_bytes: 0,
        ratio: 0.0,
        payload_ratio: 0.0,
        parameter_ratio: 0.0,
    };
    for l in layers {
        let p = l.weights.len();
        let nnz = l.weights.iter().filter(|v| **v != T::zero()).count();
        r.parameters += p;
        r.nonzeros += nnz;
        // kind + rank + dims + P + nnz + bias count
        r.header_bytes += 2 + 4 * l.shape.len() + 8 * 3;
        r.mask_bytes += p.div_ceil(8);
        r.value_bytes += 4 * nnz;
        r.bias_bytes += 4 * l.bias.len();
    }
    r.dense_bytes = 4 * r.parameters;
    r.bitmask_bytes = r.header_bytes + r.mask_bytes + r.value_bytes + r.bias_bytes;
    r.ratio = r.dense_bytes as f64 / r.bitmask_bytes as f64;
    let payload = r.mask_bytes + r.value_bytes;
    r.payload_ratio = if payload > 0 {
        r.dense_bytes as f64 / payload as f64
    } else {
        f64::INFINITY
    };
    r.parameter_ratio = if r.nonzeros > 0 {
        r.parameters as f64 / r.nonzeros as f64
    } else {
        f64::INFINITY
    };
    r
}

pub fn save_bitmask<T: Scalar>(model: &NetworkModel<T>, path: impl AsRef<Path>) -> Result<(), crate::Error> {
    crate::write_file(path.as_ref(), &encode_bitmask(model))
}

pub fn save_dense<T: Scalar>(model: &NetworkModel<T>, path: impl AsRef<Path>) -> Result<(), crate::Error> {
    crate::write_file(path.as_ref(), &encode_dense(model))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>, crate::Error> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| crate::Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(decode_bitmask(&bytes)?)
}
