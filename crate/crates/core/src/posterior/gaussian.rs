use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use super::WeightBox;
use crate::error::{Error, Result};
use crate::net::WeightVector;
use crate::scalar::Scalar;

/// Diagonal-covariance Gaussian over the flat weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
}

impl<T: Scalar> GaussianPosterior<T> {
    pub fn new(mean: Vec<T>, variance: Vec<T>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::dims("posterior variance", mean.len(), variance.len()));
        }
        if let Some(i) = mean.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("posterior mean[{i}]")));
        }
        if let Some(i) = variance.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "posterior variance[{i}] = {} must be positive",
                variance[i]
            )));
        }
        Ok(GaussianPosterior { mean, variance })
    }

    #[inline]
    pub fn num_params(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightVector<T> {
        WeightVector(
            self.mean
                .iter()
                .zip(&self.variance)
                .map(|(&m, &v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + v.sqrt() * T::lit(z)
                })
                .collect(),
        )
    }

    /// Product of per-weight interval masses, accumulated in log space.
    pub fn box_mass(&self, b: &WeightBox<T>) -> T {
        debug_assert_eq!(b.dim(), self.num_params());
        let mut log_mass = 0.0f64;
        for i in 0..self.num_params() {
            let p = interval_mass(
                self.mean[i].as_f64(),
                self.variance[i].as_f64(),
                b.lower[i].as_f64(),
                b.upper[i].as_f64(),
            );
            if p <= 0.0 {
                return T::zero();
            }
            log_mass += p.ln();
        }
        T::lit(log_mass.exp().clamp(0.0, 1.0))
    }
}

/// `P(l <= X <= u)` for `X ~ N(mean, variance)`.
///
/// Tails are evaluated through `erfc` so that intervals far from the mean
/// keep full relative precision.
pub fn interval_mass(mean: f64, variance: f64, l: f64, u: f64) -> f64 {
    if !(l <= u) {
        return 0.0;
    }
    let s = (2.0 * variance).sqrt();
    let a = (l - mean) / s;
    let b = (u - mean) / s;
    let tail = |z: f64| {
        // erfc(z) with explicit infinities
        if z == f64::INFINITY {
            0.0
        } else if z == f64::NEG_INFINITY {
            2.0
        } else {
            erfc(z)
        }
    };
    let p = if a >= 0.0 {
        0.5 * (tail(a) - tail(b))
    } else if b <= 0.0 {
        0.5 * (tail(-b) - tail(-a))
    } else if a.is_finite() && b.is_finite() && a > -1.0 && b < 1.0 {
        0.5 * (erf(b) - erf(a))
    } else {
        1.0 - 0.5 * tail(-a) - 0.5 * tail(b)
    };
    p.clamp(0.0, 1.0)
}
