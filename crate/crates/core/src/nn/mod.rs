//! Dense-tensor network engine: layers, forward and backward passes, the
//! classification loss and SGD with momentum.

pub mod eval;
pub mod layer;
pub mod loss;
pub mod model;
pub mod optim;

pub use eval::{argmax, evaluate, Evaluation};
pub use layer::{Layer, LayerKind};
pub use loss::{loss, DecayForm, LossSpec, LossValue, PROBABILITY_FLOOR};
pub use model::{add_decay_gradient, zero_gradients, Architecture, Gradients, NetworkModel, ParamTensors};
pub use optim::{sgd_step, OptimizerState, SgdConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite {what}")]
    NonFinite { what: String },
    #[error("empty dataset")]
    EmptyDataset,
}
