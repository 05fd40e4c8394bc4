use super::matrix::{solve_dense, Matrix, MatrixError};
use crate::scalar::Scalar;

/// A smooth convex function on `R^d` with its gradient.
pub trait SmoothObjective<T: Scalar> {
    fn dimension(&self) -> usize;

    fn value(&self, x: &[T]) -> T;

    fn gradient(&self, x: &[T]) -> Vec<T>;

    /// Exact minimizer over vectors whose support lies in `support`
    /// (ascending indices), when the objective has a cheap closed form.
    fn restricted_minimizer(&self, _support: &[usize]) -> Option<Result<Vec<T>, MatrixError>> {
        None
    }

    /// Lipschitz constant of the gradient, if the objective can estimate one.
    fn smoothness(&self) -> Option<T> {
        None
    }
}

/// `f(x) = ½‖Ax − b‖²`
#[derive(Clone, Debug)]
pub struct LeastSquares<T> {
    a: Matrix<T>,
    b: Vec<T>,
}

impl<T: Scalar> LeastSquares<T> {
    pub fn new(a: Matrix<T>, b: Vec<T>) -> Result<Self, MatrixError> {
        if b.len() != a.rows() {
            return Err(MatrixError::Size {
                rows: a.rows(),
                cols: 1,
                expected: a.rows(),
                found: b.len(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn rhs(&self) -> &[T] {
        &self.b
    }

    fn residual(&self, x: &[T]) -> Vec<T> {
        self.a
            .mul_vec(x)
            .into_iter()
            .zip(&self.b)
            .map(|(ax, b)| ax - *b)
            .collect()
    }
}

/// Power-iteration count used for the default step-size estimate.
pub const POWER_ITERATIONS: usize = 20;

impl<T: Scalar> SmoothObjective<T> for LeastSquares<T> {
    fn dimension(&self) -> usize {
        self.a.cols()
    }

    fn value(&self, x: &[T]) -> T {
        let r = self.residual(x);
        T::of(0.5) * r.iter().map(|v| *v * *v).sum::<T>()
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        self.a.mul_transpose_vec(&self.residual(x))
    }

    /// Normal equations `A_Fᵀ A_F z = A_Fᵀ b` on the selected columns.
    fn restricted_minimizer(&self, support: &[usize]) -> Option<Result<Vec<T>, MatrixError>> {
        let s = support.len();
        let mut gram = vec![T::zero(); s * s];
        let mut rhs = vec![T::zero(); s];
        for r in 0..self.a.rows() {
            let row = self.a.row(r);
            for (i, &ci) in support.iter().enumerate() {
                let ai = row[ci];
                rhs[i] += ai * self.b[r];
                for (j, &cj) in support.iter().enumerate().skip(i) {
                    gram[i * s + j] += ai * row[cj];
                }
            }
        }
        for i in 0..s {
            for j in 0..i {
                gram[i * s + j] = gram[j * s + i];
            }
        }
        Some(solve_dense(gram, rhs).map(|z| {
            let mut x = vec![T::zero(); self.dimension()];
            for (i, &c) in support.iter().enumerate() {
                x[c] = z[i];
            }
            x
        }))
    }

    fn smoothness(&self) -> Option<T> {
        Some(self.a.gram_spectral_norm(POWER_ITERATIONS))
    }
}

/// Objective assembled from closures. Has no closed-form restricted solver,
/// so restricted minimization falls back to projected descent.
pub struct FnObjective<F, G> {
    dimension: usize,
    value: F,
    gradient: G,
    smoothness: Option<f64>,
}

impl<F, G> FnObjective<F, G> {
    pub fn new(dimension: usize, value: F, gradient: G) -> Self {
        Self {
            dimension,
            value,
            gradient,
            smoothness: None,
        }
    }

    pub fn with_smoothness(mut self, lipschitz: f64) -> Self {
        self.smoothness = Some(lipschitz);
        self
    }
}

impl<T, F, G> SmoothObjective<T> for FnObjective<F, G>
where
    T: Scalar,
    F: Fn(&[T]) -> T,
    G: Fn(&[T]) -> Vec<T>,
{
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn value(&self, x: &[T]) -> T {
        (self.value)(x)
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        (self.gradient)(x)
    }

    fn smoothness(&self) -> Option<T> {
        self.smoothness.map(T::of)
    }
}
