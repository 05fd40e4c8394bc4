//! The hard-thresholding operator and support sets.

use std::cmp::Ordering;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("non-finite entry at index {index}")]
pub struct NonFiniteError {
    pub index: usize,
}

fn check_finite<T: Scalar>(v: &[T]) -> Result<(), NonFiniteError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(NonFiniteError { index }),
        None => Ok(()),
    }
}

/// Indices of the `k` largest-magnitude entries, ascending.
///
/// Magnitude ties at the cutoff go to the lower index, so the selection is a
/// deterministic function of `v`. Returns `min(k, v.len())` indices, which may
/// include zero entries when `v` has fewer than `k` nonzeros.
pub fn top_k_support<T: Scalar>(v: &[T], k: usize) -> Result<Vec<usize>, NonFiniteError> {
    check_finite(v)?;
    let d = v.len();
    if k >= d {
        return Ok((0..d).collect());
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    // Strict total order: larger magnitude first, then lower index.
    let by_rank = |a: &usize, b: &usize| -> Ordering {
        let (ma, mb) = (v[*a].abs(), v[*b].abs());
        mb.partial_cmp(&ma)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..d).collect();
    idx.select_nth_unstable_by(k - 1, by_rank);
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// Zeroes all but the top-`k` entries of `v` in place and returns the retained
/// index set (see [`top_k_support`]).
pub fn hard_threshold_in_place<T: Scalar>(
    v: &mut [T],
    k: usize,
) -> Result<Vec<usize>, NonFiniteError> {
    let keep = top_k_support(v, k)?;
    let mut next = keep.iter().peekable();
    for (i, x) in v.iter_mut().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
        } else {
            *x = T::zero();
        }
    }
    Ok(keep)
}

/// The operator that keeps the `k` entries of largest magnitude and zeroes the rest.
pub fn hard_threshold<T: Scalar>(v: &[T], k: usize) -> Result<Vec<T>, NonFiniteError> {
    let mut out = v.to_vec();
    hard_threshold_in_place(&mut out, k)?;
    Ok(out)
}

/// Indices of the nonzero entries, ascending.
pub fn support<T: Scalar>(v: &[T]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != T::zero())
        .map(|(i, _)| i)
        .collect()
}
