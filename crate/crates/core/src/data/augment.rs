use rand::Rng;

use super::{DataError, Dataset};
use crate::scalar::Scalar;

/// Mirrors each sample along its last (width) axis with the given probability.
/// Samples must be at least two-dimensional.
pub fn augment_flip<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    probability: f64,
    rng: &mut R,
) -> Result<Dataset<T>, DataError> {
    let shape = data.sample_shape().to_vec();
    if shape.len() < 2 {
        return Err(DataError::NotImage { shape });
    }
    if !(0.0..=1.0).contains(&probability) {
        return Err(DataError::Invalid(format!("flip probability {probability} not in [0, 1]")));
    }
    let mut out = data.clone();
    if probability == 0.0 {
        return Ok(out);
    }
    let width = *shape.last().unwrap();
    let n = data.sample_len();
    for sample in out.images.data_mut().chunks_mut(n) {
        if probability >= 1.0 || rng.random_bool(probability) {
            for row in sample.chunks_mut(width) {
                row.reverse();
            }
        }
    }
    Ok(out)
}
