//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the bound machinery is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Relative slack used when widening computed bounds outward so that
    /// accumulated round-off can never make an enclosure unsound.
    #[inline]
    fn rounding_slack() -> Self {
        Self::epsilon() * Self::lit(256.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Pushes `[lo, hi]` outward by a margin proportional to `magnitude`, the
/// sum of absolute values of the terms that produced the endpoints.
#[inline]
pub(crate) fn widen<T: Scalar>(lo: T, hi: T, magnitude: T) -> (T, T) {
    let m = T::rounding_slack() * magnitude + T::min_positive_value();
    (lo - m, hi + m)
}
