//! Sparsity-constrained convex minimization, `min f(x) s.t. ‖x‖₀ ≤ k`.

pub mod matrix;
pub mod objective;
pub mod planted;
pub mod solver;
pub mod threshold;

pub use matrix::{Matrix, MatrixError};
pub use objective::{FnObjective, LeastSquares, SmoothObjective};
pub use planted::{planted_instance, PlantedInstance};
pub use solver::{
    ght_solve, gradient_step, restricted_minimize, write_trace_csv, GhtConfig, GhtError,
    GhtReport, GhtState, Restricted, TraceRow,
};
pub use threshold::{hard_threshold, hard_threshold_in_place, support, top_k_support, NonFiniteError};
