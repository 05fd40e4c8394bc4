//! Sparse deep networks trained by iterative hard thresholding.
//!
//! * [`ght`]: gradient hard thresholding for sparsity-constrained convex
//!   problems, with the hard-thresholding operator it is built on.
//! * [`nn`]: a small dense network engine (fully connected, conv2d, pooling)
//!   with exact backpropagation and SGD with momentum.
//! * [`iht`]: the alternating threshold / fine-tune / restore training loop.
//! * [`model_io`]: the bitmask checkpoint format and size accounting.
//! * [`data`] and [`experiment`]: datasets, run configs and sparsity sweeps.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what the command-line tool uses.

pub mod data;
pub mod experiment;
pub mod ght;
pub mod iht;
pub mod model_io;
pub mod nn;
pub mod scalar;
pub mod tensor;

use std::path::Path;

pub use scalar::Scalar;
pub use tensor::{ShapeError, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Network = nn::NetworkModel<f64>;
pub type Network32 = nn::NetworkModel<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type LeastSquares64 = ght::LeastSquares<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ght(#[from] ght::GhtError),
    #[error(transparent)]
    Matrix(#[from] ght::MatrixError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Train(#[from] iht::TrainError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Codec(#[from] model_io::CodecError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Short machine-readable category, used for structured error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ght(_) => "ght",
            Error::Matrix(_) => "matrix",
            Error::Nn(_) => "network",
            Error::Train(_) => "train",
            Error::Data(_) => "data",
            Error::Codec(_) => "codec",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
