use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::spec::check_box;

/// Axis-aligned hyper-rectangle `[lower, upper]` in weight space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightBox<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> WeightBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_box(&lower, &upper, "weight box")?;
        Ok(WeightBox { lower, upper })
    }

    pub fn point(w: &[T]) -> Self {
        WeightBox {
            lower: w.to_vec(),
            upper: w.to_vec(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) * half)
            .collect()
    }

    /// Closed-interval membership.
    pub fn contains(&self, w: &[T]) -> bool {
        w.len() == self.dim()
            && w
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| l <= v && v <= u)
    }

    /// Intersection with `other`, `None` when empty.
    pub fn intersect(&self, other: &WeightBox<T>) -> Option<WeightBox<T>> {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let l = self.lower[i].max(other.lower[i]);
            let u = self.upper[i].min(other.upper[i]);
            if l > u {
                return None;
            }
            lower.push(l);
            upper.push(u);
        }
        Some(WeightBox { lower, upper })
    }

    pub fn intersects(&self, other: &WeightBox<T>) -> bool {
        (0..self.dim()).all(|i| {
            self.lower[i].max(other.lower[i]) <= self.upper[i].min(other.upper[i])
        })
    }
}

/// Greedy pairwise-disjoint subset: boxes are visited in order and kept
/// unless they meet a box kept earlier. Returns the indices of kept boxes.
pub fn disjointify<T: Scalar>(boxes: &[WeightBox<T>]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, b) in boxes.iter().enumerate() {
        if kept.iter().all(|&k| !boxes[k].intersects(b)) {
            kept.push(i);
        }
    }
    kept
}
