//! Datasets: MNIST IDX and CIFAR-10 binary ingestion, seeded synthetic
//! clusters, flip augmentation.

mod augment;
mod blobs;
mod cifar;
mod idx;

pub use augment::augment_flip;
pub use blobs::synth_blobs;
pub use cifar::load_cifar10_binary;
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: wrong magic {found} (expected {expected})")]
    WrongMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated at byte offset {offset}, needed {needed} bytes")]
    Truncated {
        path: String,
        offset: usize,
        needed: usize,
    },
    #[error("{path}: {extra} unexpected trailing bytes")]
    TrailingBytes { path: String, extra: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at sample {index} out of range for {classes} classes")]
    LabelRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("flip augmentation needs image-shaped samples, got sample shape {shape:?}")]
    NotImage { shape: Vec<usize> },
    #[error("invalid dataset request: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// Labelled samples stored as one `[N, ...]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    images: Tensor<T>,
    labels: Vec<usize>,
    class_count: usize,
    pub split: Split,
    /// Factor applied to the raw values on load (`1/255` for IDX pixels).
    pub scale: f64,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>, class_count: usize) -> Result<Self, DataError> {
        let n = images.shape().first().copied().unwrap_or(0);
        if images.shape().len() < 2 || n != labels.len() {
            return Err(DataError::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, l)| **l >= class_count) {
            return Err(DataError::LabelRange {
                index,
                label,
                classes: class_count,
            });
        }
        Ok(Self {
            images,
            labels,
            class_count,
            split: Split::Train,
            scale: 1.0,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[T], usize) {
        let n = self.sample_len();
        (&self.images.data()[i * n..(i + 1) * n], self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], usize)> + '_ {
        let n = self.sample_len().max(1);
        self.images.data().chunks(n).zip(self.labels.iter().copied())
    }

    /// Samples at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.sample(i).0);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        Self {
            images: Tensor::from_vec(&shape, data).expect("consistent shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            split: self.split,
            scale: self.scale,
        }
    }

    /// First `n` samples (all of them if fewer).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.select(&head), self.select(&tail).with_split(Split::Test))
    }

    /// Same samples, reshaped to flat vectors.
    pub fn flattened(&self) -> Self {
        let mut out = self.clone();
        out.images = out
            .images
            .reshape(&[self.len(), self.sample_len()])
            .expect("same element count");
        out
    }
}
