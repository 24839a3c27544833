//! Linear lower/upper bounding functions of activations on an interval.

use crate::error::{Error, Result};
use crate::net::Activation;
use crate::scalar::Scalar;

/// `lower_slope * z + lower_intercept <= act(z) <= upper_slope * z + upper_intercept`
/// for every `z` in the interval the relaxation was built for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxation<T> {
    pub lower_slope: T,
    pub lower_intercept: T,
    pub upper_slope: T,
    pub upper_intercept: T,
}

impl<T: Scalar> Relaxation<T> {
    fn exact(slope: T, intercept: T) -> Self {
        Relaxation {
            lower_slope: slope,
            lower_intercept: intercept,
            upper_slope: slope,
            upper_intercept: intercept,
        }
    }

    /// Shifts both lines outward to absorb round-off in their construction.
    fn padded(mut self, zl: T, zu: T) -> Self {
        let reach = zl.abs().max(zu.abs());
        let pad = |a: T, b: T| T::rounding_slack() * (T::one() + b.abs() + a.abs() * reach);
        self.lower_intercept -= pad(self.lower_slope, self.lower_intercept);
        self.upper_intercept += pad(self.upper_slope, self.upper_intercept);
        self
    }

    pub fn lower_at(&self, z: T) -> T {
        self.lower_slope * z + self.lower_intercept
    }

    pub fn upper_at(&self, z: T) -> T {
        self.upper_slope * z + self.upper_intercept
    }
}

pub fn relax_activation<T: Scalar>(kind: Activation, zl: T, zu: T) -> Result<Relaxation<T>> {
    if !(zl <= zu) {
        return Err(Error::invalid(format!(
            "activation relaxation needs zl <= zu, got [{zl}, {zu}]"
        )));
    }
    Ok(match kind {
        Activation::Identity => Relaxation::exact(T::one(), T::zero()),
        Activation::Relu => relu(zl, zu),
        Activation::Tanh => {
            let (us, ui) = tanh_upper(zl, zu);
            let (ls, li) = tanh_upper(-zu, -zl);
            Relaxation {
                lower_slope: ls,
                lower_intercept: -li,
                upper_slope: us,
                upper_intercept: ui,
            }
            .padded(zl, zu)
        }
    })
}

fn relu<T: Scalar>(zl: T, zu: T) -> Relaxation<T> {
    if zl >= T::zero() {
        return Relaxation::exact(T::one(), T::zero());
    }
    if zu <= T::zero() {
        return Relaxation::exact(T::zero(), T::zero());
    }
    let slope = zu / (zu - zl);
    let intercept = -slope * zl;
    let lower_slope = if zu >= -zl { T::one() } else { T::zero() };
    let pad = T::rounding_slack() * (intercept.abs() + slope * zu);
    Relaxation {
        lower_slope,
        lower_intercept: T::zero(),
        upper_slope: slope,
        upper_intercept: intercept + pad,
    }
}

#[inline]
fn dtanh<T: Scalar>(z: T) -> T {
    let t = z.tanh();
    T::one() - t * t
}

/// Tangent line of tanh at `d`.
#[inline]
fn tangent<T: Scalar>(d: T) -> (T, T) {
    let s = dtanh(d);
    (s, d.tanh() - s * d)
}

/// Upper linear bound of tanh on `[zl, zu]`.
///
/// tanh is convex on `z <= 0` and concave on `z >= 0`. On the concave side
/// any tangent dominates; on the convex side the chord does. For a mixed
/// interval the chord works when tanh'(zu) >= chord slope; otherwise a
/// tangent at `d in [0, zu]` that still clears `(zl, tanh(zl))` is found by
/// bisection, always keeping the feasible end of the bracket.
fn tanh_upper<T: Scalar>(zl: T, zu: T) -> (T, T) {
    if zl == zu {
        return tangent(zl);
    }
    let chord = || {
        let slope = (zu.tanh() - zl.tanh()) / (zu - zl);
        (slope, zl.tanh() - slope * zl)
    };
    if zl >= T::zero() {
        return tangent(zl + (zu - zl) * T::lit(0.5));
    }
    if zu <= T::zero() {
        return chord();
    }
    let (k, b) = chord();
    if dtanh(zu) >= k {
        return (k, b);
    }
    let clears = |d: T| {
        let (s, i) = tangent(d);
        s * zl + i >= zl.tanh()
    };
    let (mut lo, mut hi) = (T::zero(), zu);
    for _ in 0..20 {
        let mid = lo + (hi - lo) * T::lit(0.5);
        if clears(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (s, i) = tangent(hi);
    if s.is_finite() && i.is_finite() && clears(hi) {
        (s, i)
    } else {
        // constant bound, valid because tanh is increasing
        (T::zero(), zu.tanh())
    }
}
