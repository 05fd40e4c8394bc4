//! Gradient hard thresholding: gradient step, hard threshold, then minimize
//! over the selected support, repeated until the iterate stops moving.

use serde::Serialize;

use super::matrix::MatrixError;
use super::objective::SmoothObjective;
use super::threshold::{hard_threshold_in_place, support, NonFiniteError};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum GhtError {
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("step size too large: objective {value:e} exceeds 1e12 x initial {initial:e} at iteration {iteration}")]
    Diverged {
        iteration: usize,
        value: f64,
        initial: f64,
    },
    #[error("initial point has nonzero entry {index} outside the support set")]
    OffSupport { index: usize },
    #[error("objective has dimension {expected}, vector has {found}")]
    Dimension { expected: usize, found: usize },
}

impl From<NonFiniteError> for GhtError {
    fn from(_: NonFiniteError) -> Self {
        GhtError::NonFinite {
            what: "iterate",
            iteration: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GhtConfig<T> {
    /// Cardinality bound `‖x‖₀ ≤ k`.
    pub k: usize,
    /// `None` uses `1/L` from [`SmoothObjective::smoothness`].
    pub step_size: Option<T>,
    pub max_iterations: usize,
    /// Projected-descent steps when no closed-form restricted solver exists.
    pub inner_restricted_steps: usize,
    /// Stop once `‖x⁽ᵗ⁾ − x⁽ᵗ⁻¹⁾‖∞` drops below this.
    pub tolerance: T,
}

impl<T: Scalar> GhtConfig<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            step_size: None,
            max_iterations: 200,
            inner_restricted_steps: 50,
            tolerance: T::of(1e-8),
        }
    }

    pub fn with_step_size(mut self, eta: T) -> Self {
        self.step_size = Some(eta);
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    fn validate(&self, dimension: usize) -> Result<(), GhtError> {
        if self.k == 0 || self.k > dimension {
            return Err(GhtError::Config(format!(
                "k must be in 1..={dimension}, got {}",
                self.k
            )));
        }
        if let Some(eta) = self.step_size {
            if !(eta > T::zero()) || !eta.is_finite() {
                return Err(GhtError::Config(format!("step size must be positive, got {eta}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(GhtError::Config("max_iterations must be at least 1".into()));
        }
        if self.inner_restricted_steps == 0 {
            return Err(GhtError::Config("inner_restricted_steps must be at least 1".into()));
        }
        if !(self.tolerance >= T::zero()) {
            return Err(GhtError::Config("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GhtState<T> {
    pub x: Vec<T>,
    /// Support set selected by the last thresholding, ascending.
    pub support: Vec<usize>,
    pub step_size: T,
    pub iteration: usize,
    pub objective: T,
}

/// One row of the iteration trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub support_size: usize,
    /// Indices entering the support relative to the previous iteration.
    pub support_change: usize,
    /// Objective right after thresholding, before the restricted minimization.
    #[serde(skip)]
    pub objective_thresholded: f64,
}

#[derive(Clone, Debug)]
pub struct GhtReport<T> {
    pub state: GhtState<T>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// `x − η ∇f(x)`, without thresholding.
pub fn gradient_step<T: Scalar, O: SmoothObjective<T> + ?Sized>(
    state: &GhtState<T>,
    obj: &O,
) -> Result<Vec<T>, GhtError> {
    let g = obj.gradient(&state.x);
    if g.len() != state.x.len() {
        return Err(GhtError::Dimension {
            expected: state.x.len(),
            found: g.len(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(GhtError::NonFinite {
            what: "gradient",
            iteration: state.iteration,
        });
    }
    let eta = state.step_size;
    Ok(state.x.iter().zip(&g).map(|(x, g)| *x - eta * *g).collect())
}

#[derive(Clone, Debug)]
pub struct Restricted<T> {
    pub x: Vec<T>,
    pub warning: Option<String>,
}

/// Minimizes `obj` over vectors supported on `support`, starting from `x_init`.
///
/// Uses the objective's closed-form restricted solver when it has one; if that
/// system is singular, or there is none, runs `steps` projected gradient steps
/// with step `step_size`, halving the step whenever it would raise the value.
pub fn restricted_minimize<T: Scalar, O: SmoothObjective<T> + ?Sized>(
    obj: &O,
    support_set: &[usize],
    x_init: &[T],
    steps: usize,
    step_size: T,
) -> Result<Restricted<T>, GhtError> {
    let d = obj.dimension();
    if x_init.len() != d {
        return Err(GhtError::Dimension {
            expected: d,
            found: x_init.len(),
        });
    }
    let mut on = vec![false; d];
    for &i in support_set {
        on[i] = true;
    }
    if let Some(index) = (0..d).find(|&i| !on[i] && x_init[i] != T::zero()) {
        return Err(GhtError::OffSupport { index });
    }
    if support_set.is_empty() {
        return Ok(Restricted {
            x: vec![T::zero(); d],
            warning: None,
        });
    }

    let mut warning = None;
    match obj.restricted_minimizer(support_set) {
        Some(Ok(x)) if x.iter().all(|v| v.is_finite()) => {
            // The exact minimizer can only tie or beat x_init; guard roundoff.
            if obj.value(&x) <= obj.value(x_init) {
                return Ok(Restricted { x, warning: None });
            }
            return Ok(Restricted {
                x: x_init.to_vec(),
                warning: None,
            });
        }
        Some(Ok(_)) | Some(Err(MatrixError::Singular { .. })) => {
            warning = Some(format!(
                "restricted least-squares system on {} columns is singular; using projected descent",
                support_set.len()
            ));
            log::warn!("{}", warning.as_deref().unwrap_or_default());
        }
        Some(Err(_)) | None => {}
    }

    let mut x = x_init.to_vec();
    let mut fx = obj.value(&x);
    for _ in 0..steps {
        let g = obj.gradient(&x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(GhtError::NonFinite {
                what: "gradient",
                iteration: 0,
            });
        }
        let mut eta = step_size;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<T> = x
                .iter()
                .zip(&g)
                .zip(&on)
                .map(|((x, g), on)| if *on { *x - eta * *g } else { T::zero() })
                .collect();
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= fx {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            eta = eta * T::of(0.5);
        }
        if !accepted {
            break;
        }
    }
    Ok(Restricted { x, warning })
}

/// Runs the solver from `x = 0`.
pub fn ght_solve<T: Scalar, O: SmoothObjective<T> + ?Sized>(
    obj: &O,
    cfg: &GhtConfig<T>,
) -> Result<GhtReport<T>, GhtError> {
    let d = obj.dimension();
    cfg.validate(d)?;
    let eta = match cfg.step_size {
        Some(eta) => eta,
        None => {
            let l = obj.smoothness().ok_or_else(|| {
                GhtError::Config("objective has no smoothness estimate; set a step size".into())
            })?;
            if !(l > T::zero()) || !l.is_finite() {
                return Err(GhtError::Config(format!("bad smoothness estimate {l}")));
            }
            T::one() / l
        }
    };

    let x0 = vec![T::zero(); d];
    let f0 = obj.value(&x0);
    if !f0.is_finite() {
        return Err(GhtError::NonFinite {
            what: "objective",
            iteration: 0,
        });
    }
    let limit = T::of(1e12) * f0.max(T::min_positive_value());

    let mut state = GhtState {
        x: x0,
        support: Vec::new(),
        step_size: eta,
        iteration: 0,
        objective: f0,
    };
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;

    for t in 1..=cfg.max_iterations {
        state.iteration = t;
        let mut xt = gradient_step(&state, obj)?;
        let selected = hard_threshold_in_place(&mut xt, cfg.k).map_err(|_| GhtError::NonFinite {
            what: "gradient step",
            iteration: t,
        })?;
        let f_thr = obj.value(&xt);
        check_value(f_thr, limit, f0, t)?;

        let r = restricted_minimize(obj, &selected, &xt, cfg.inner_restricted_steps, eta)?;
        if let Some(w) = r.warning {
            warnings.push(format!("iteration {t}: {w}"));
        }
        let f_new = obj.value(&r.x);
        check_value(f_new, limit, f0, t)?;

        let entering = selected
            .iter()
            .filter(|i| state.support.binary_search(i).is_err())
            .count();
        let moved = r
            .x
            .iter()
            .zip(&state.x)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));

        trace.push(TraceRow {
            iteration: t,
            objective: f_new.as_f64(),
            support_size: support(&r.x).len(),
            support_change: entering,
            objective_thresholded: f_thr.as_f64(),
        });
        state.x = r.x;
        state.support = selected;
        state.objective = f_new;

        if moved < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(GhtReport {
        state,
        trace,
        converged,
        warnings,
    })
}

fn check_value<T: Scalar>(v: T, limit: T, initial: T, iteration: usize) -> Result<(), GhtError> {
    if !v.is_finite() {
        return Err(GhtError::NonFinite {
            what: "objective",
            iteration,
        });
    }
    if v > limit {
        return Err(GhtError::Diverged {
            iteration,
            value: v.as_f64(),
            initial: initial.as_f64(),
        });
    }
    Ok(())
}

/// Writes the trace as CSV: `iteration,objective,support_size,support_change`.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
