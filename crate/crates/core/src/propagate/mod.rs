//! Output enclosures `[y_lo, y_hi]` valid for every input in `T` and every
//! weight vector in a weight box `R`.

mod ibp;
mod lbp;
mod relax;

pub use ibp::{ibp_forward, ibp_layer, LayerBounds};
pub use lbp::{lbp_forward, lbp_forward_with, Direction, LbpOptions, LbpOutput, LinearBound};
pub use relax::{relax_activation, Relaxation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::posterior::WeightBox;
use crate::scalar::Scalar;
use crate::spec::InputBox;

/// Closed real interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(v: T) -> Self {
        Interval { lo: v, hi: v }
    }

    /// Range of the product `a * b`: the extremes of a bilinear form on a
    /// rectangle sit at its four corners.
    pub fn times(self, other: Interval<T>) -> Interval<T> {
        let c = [
            self.lo * other.lo,
            self.hi * other.lo,
            self.lo * other.hi,
            self.hi * other.hi,
        ];
        Interval {
            lo: c.iter().copied().fold(T::infinity(), T::min),
            hi: c.iter().copied().fold(T::neg_infinity(), T::max),
        }
    }

    #[inline]
    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// Bound propagation method.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Interval bound propagation.
    #[default]
    Ibp,
    /// Linear bound propagation with McCormick relaxations.
    Lbp,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ibp" => Ok(Method::Ibp),
            "lbp" => Ok(Method::Lbp),
            other => Err(Error::invalid(format!("unknown propagation method {other:?}"))),
        }
    }
}

/// Dispatches to [`ibp_forward`] or [`lbp_forward`].
pub fn propagate<T: Scalar>(
    method: Method,
    net: &Network,
    t: &InputBox<T>,
    r: &WeightBox<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    match method {
        Method::Ibp => ibp_forward(net, t, r),
        Method::Lbp => lbp_forward(net, t, r),
    }
}

pub(crate) fn check_shapes<T: Scalar>(net: &Network, t: &InputBox<T>, r: &WeightBox<T>) -> Result<()> {
    net.check_input(t.dim(), "input box")?;
    net.check_params(r.dim(), "weight box")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_products() {
        let p = Interval::new(-1.0, 2.0).unwrap().times(Interval::new(-3.0, 1.0).unwrap());
        assert_eq!((p.lo, p.hi), (-6.0, 3.0));
        assert!(Interval::new(1.0, 0.0).is_err());
    }

    #[test]
    fn method_parse() {
        assert_eq!("LBP".parse::<Method>().unwrap(), Method::Lbp);
        assert!("crown".parse::<Method>().is_err());
    }
}
