//! Truncated inclusion-exclusion over unions of (possibly overlapping)
//! weight boxes. Every intersection of axis-aligned boxes is again a box, so
//! each term is an exact box integral.

use super::{Posterior, WeightBox};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `sums[j-1] = sum over all j-subsets I of mass(intersection(I)) * min_{i in I} value_i`
/// for `j = 1..=max_depth`. With unit values this is the plain `S_j`.
///
/// Empty or zero-mass intersections prune the whole subtree of supersets.
fn weighted_sums<T: Scalar>(
    posterior: &Posterior<T>,
    boxes: &[WeightBox<T>],
    values: &[T],
    max_depth: usize,
) -> Vec<T> {
    let mut sums = vec![T::zero(); max_depth];

    fn visit<T: Scalar>(
        posterior: &Posterior<T>,
        boxes: &[WeightBox<T>],
        values: &[T],
        start: usize,
        current: &WeightBox<T>,
        min_value: T,
        size: usize,
        sums: &mut [T],
    ) {
        for i in start..boxes.len() {
            let Some(inter) = current.intersect(&boxes[i]) else {
                continue;
            };
            let mass = posterior.box_mass(&inter);
            if mass <= T::zero() {
                continue;
            }
            let v = min_value.min(values[i]);
            sums[size] += mass * v;
            if size + 1 < sums.len() {
                visit(posterior, boxes, values, i + 1, &inter, v, size + 1, sums);
            }
        }
    }

    if max_depth == 0 {
        return sums;
    }
    for i in 0..boxes.len() {
        let mass = posterior.box_mass(&boxes[i]);
        if mass <= T::zero() {
            continue;
        }
        sums[0] += mass * values[i];
        if max_depth > 1 {
            visit(posterior, boxes, values, i + 1, &boxes[i], values[i], 1, &mut sums);
        }
    }
    sums
}

/// `S_1, ..., S_depth`: summed posterior mass of all `j`-wise intersections.
pub fn intersection_sums<T: Scalar>(posterior: &Posterior<T>, boxes: &[WeightBox<T>], depth: usize) -> Vec<T> {
    let ones = vec![T::one(); boxes.len()];
    weighted_sums(posterior, boxes, &ones, depth.min(boxes.len()))
}

fn partial_sum<T: Scalar>(sums: &[T], depth: usize) -> T {
    sums.iter()
        .take(depth)
        .enumerate()
        .fold(T::zero(), |acc, (j, &s)| if j % 2 == 0 { acc + s } else { acc - s })
}

/// Bonferroni lower/upper bounds on the posterior mass of the union of `boxes`.
///
/// `depth_lower` must be even and `depth_upper` odd; both are capped at the
/// number of boxes, where the truncated sum becomes exact.
pub fn bonferroni_bounds<T: Scalar>(
    boxes: &[WeightBox<T>],
    posterior: &Posterior<T>,
    depth_lower: usize,
    depth_upper: usize,
) -> Result<(T, T)> {
    if depth_lower < 2 || !depth_lower.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "Bonferroni lower depth must be an even integer >= 2, got {depth_lower}"
        )));
    }
    if depth_upper % 2 != 1 {
        return Err(Error::invalid(format!(
            "Bonferroni upper depth must be an odd integer >= 1, got {depth_upper}"
        )));
    }
    if boxes.is_empty() {
        return Ok((T::zero(), T::zero()));
    }
    let dl = depth_lower.min(boxes.len());
    let du = depth_upper.min(boxes.len());
    let sums = intersection_sums(posterior, boxes, dl.max(du));
    let lower = partial_sum(&sums, dl).max(T::zero());
    let upper = partial_sum(&sums, du).min(T::one());
    Ok((lower, upper))
}

/// Lower bound on `integral over the union of max_{i : w in box_i} values_i`
/// for non-negative `values`, by inclusion-exclusion truncated at an even
/// `depth` (exact once `depth >= boxes.len()`).
///
/// Uses `max(A) = sum_{I subset A} (-1)^{|I|+1} min(I)`, applied level-set by
/// level-set, so every truncation at even depth stays a lower bound.
pub fn bonferroni_weighted_lower<T: Scalar>(
    boxes: &[WeightBox<T>],
    values: &[T],
    posterior: &Posterior<T>,
    depth: usize,
) -> Result<T> {
    if values.len() != boxes.len() {
        return Err(Error::dims("box values", boxes.len(), values.len()));
    }
    if values.iter().any(|&v| !(v >= T::zero())) {
        return Err(Error::invalid("weighted Bonferroni values must be non-negative"));
    }
    if depth < 2 || !depth.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "Bonferroni lower depth must be an even integer >= 2, got {depth}"
        )));
    }
    if boxes.is_empty() {
        return Ok(T::zero());
    }
    let d = depth.min(boxes.len());
    let sums = weighted_sums(posterior, boxes, values, d);
    Ok(partial_sum(&sums, d).max(T::zero()))
}
