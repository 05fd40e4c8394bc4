use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::Matrix;
use crate::scalar::Scalar;

/// Noiseless sparse regression problem `b = A x*` with a known answer.
#[derive(Clone, Debug)]
pub struct PlantedInstance<T> {
    pub a: Matrix<T>,
    pub b: Vec<T>,
    pub x_star: Vec<T>,
    /// Support of `x*`, ascending.
    pub support: Vec<usize>,
}

/// Standard normal `A` (`rows × cols`) and an `s`-sparse `x*` whose nonzeros
/// have random signs and magnitudes uniform in `[1, 2)`.
pub fn planted_instance<T: Scalar>(rows: usize, cols: usize, s: usize, seed: u64) -> PlantedInstance<T> {
    assert!(s <= cols, "sparsity {s} exceeds dimension {cols}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<T> = (0..rows * cols)
        .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let a = Matrix::from_row_major(rows, cols, data).expect("sizes agree");
    let mut support = rand::seq::index::sample(&mut rng, cols, s).into_vec();
    support.sort_unstable();
    let mut x_star = vec![T::zero(); cols];
    for &i in &support {
        let mag = rng.random_range(1.0..2.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        x_star[i] = T::of(sign * mag);
    }
    let b = a.mul_vec(&x_star);
    PlantedInstance { a, b, x_star, support }
}
