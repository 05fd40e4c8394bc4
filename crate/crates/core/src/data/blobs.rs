use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, Dataset};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gaussian clusters (unit variance) around seeded random centers.
///
/// When `classes ≤ dimension` the centers are orthogonal and every pair sits
/// exactly `separation` apart; otherwise they are random directions at radius
/// `separation`. Samples are interleaved by class (`label = i mod classes`).
pub fn synth_blobs<T: Scalar>(
    classes: usize,
    per_class: usize,
    dimension: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<T>, DataError> {
    if classes < 2 {
        return Err(DataError::Invalid(format!("need at least 2 classes, got {classes}")));
    }
    if dimension == 0 {
        return Err(DataError::Invalid("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut c: Vec<f64> = (0..dimension).map(|_| StandardNormal.sample(&mut rng)).collect();
        if classes <= dimension {
            for prev in &centers {
                let d: f64 = c.iter().zip(prev).map(|(a, b)| a * b).sum();
                c.iter_mut().zip(prev).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        c.iter_mut().for_each(|v| *v /= norm);
        centers.push(c);
    }
    let radius = if classes <= dimension {
        separation / std::f64::consts::SQRT_2
    } else {
        separation
    };

    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dimension);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        for center in &centers[label] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(T::of(radius * center + noise));
        }
        labels.push(label);
    }
    let images = Tensor::from_vec(&[n, dimension], data).expect("sized above");
    Dataset::new(images, labels, classes)
}
