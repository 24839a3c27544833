//! Linear bound propagation: every neuron carries a lower and an upper
//! linear function of the input `x` and all weight matrices seen so far.
//!
//! Variable layout of a bound after layer `k` is `[x, W^(0), ..., W^(k)]`,
//! each weight matrix flattened row-major. Biases enter through their
//! interval endpoints.

use serde::{Deserialize, Serialize};

use super::ibp::{activate_bounds, affine_bounds, layer_box};
use super::relax::relax_activation;
use super::{check_shapes, LayerBounds};
use crate::error::Result;
use crate::net::Network;
use crate::posterior::WeightBox;
use crate::scalar::Scalar;
use crate::spec::InputBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Upper,
}

/// `mu . x + sum_l <nu_l, W^(l)> + lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBound<T> {
    pub direction: Direction,
    coeffs: Vec<T>,
    lambda: T,
    /// Start of each variable block; `offsets[0] = 0` is `x`, the last entry
    /// is the total length.
    offsets: Vec<usize>,
}

impl<T: Scalar> LinearBound<T> {
    pub fn mu(&self) -> &[T] {
        &self.coeffs[..self.offsets[1]]
    }

    /// Row-major coefficients of `W^(l)`.
    pub fn nu(&self, l: usize) -> &[T] {
        &self.coeffs[self.offsets[l + 1]..self.offsets[l + 2]]
    }

    pub fn num_layers(&self) -> usize {
        self.offsets.len() - 2
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Value at an input `x` and full parameter vector `w`.
    pub fn eval(&self, net: &Network, x: &[T], w: &[T]) -> Result<T> {
        net.check_input(x.len(), "bound evaluation")?;
        net.check_params(w.len(), "bound evaluation")?;
        let mut acc = self.lambda;
        for (c, v) in self.mu().iter().zip(x) {
            acc += *c * *v;
        }
        for l in 0..self.num_layers() {
            for (c, v) in self.nu(l).iter().zip(net.layer_weights(w, l)) {
                acc += *c * *v;
            }
        }
        Ok(acc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LbpOptions {
    /// Intersect every layer's pre-activation bounds with the interval step
    /// computed from the same input bounds.
    pub intersect_ibp: bool,
}

impl Default for LbpOptions {
    fn default() -> Self {
        LbpOptions { intersect_ibp: true }
    }
}

#[derive(Clone, Debug)]
pub struct LbpOutput<T> {
    pub y_lo: Vec<T>,
    pub y_hi: Vec<T>,
    /// Linear bounds on each output logit.
    pub lower: Vec<LinearBound<T>>,
    pub upper: Vec<LinearBound<T>>,
    /// Concrete bounds of every layer; the last entry's pre-activation
    /// bounds equal `y_lo`/`y_hi`.
    pub layers: Vec<LayerBounds<T>>,
}

#[derive(Clone, Debug)]
struct Lin<T> {
    c: Vec<T>,
    k: T,
}

impl<T: Scalar> Lin<T> {
    fn zeros(len: usize) -> Self {
        Lin { c: vec![T::zero(); len], k: T::zero() }
    }

    fn add_scaled(&mut self, other: &Lin<T>, s: T) {
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += s * *b;
        }
        self.k += s * other.k;
    }

    fn scaled(&self, s: T, shift: T) -> Lin<T> {
        Lin {
            c: self.c.iter().map(|&v| v * s).collect(),
            k: self.k * s + shift,
        }
    }

    fn min_over(&self, lo: &[T], hi: &[T]) -> T {
        let (mut acc, mut mag) = (self.k, self.k.abs());
        for ((&c, &l), &h) in self.c.iter().zip(lo).zip(hi) {
            let t = if c >= T::zero() { c * l } else { c * h };
            acc += t;
            mag += t.abs();
        }
        crate::scalar::widen(acc, acc, mag).0
    }

    fn max_over(&self, lo: &[T], hi: &[T]) -> T {
        let (mut acc, mut mag) = (self.k, self.k.abs());
        for ((&c, &l), &h) in self.c.iter().zip(lo).zip(hi) {
            let t = if c >= T::zero() { c * h } else { c * l };
            acc += t;
            mag += t.abs();
        }
        crate::scalar::widen(acc, acc, mag).1
    }
}

/// Output box via linear bound propagation with default options.
pub fn lbp_forward<T: Scalar>(net: &Network, t: &InputBox<T>, r: &WeightBox<T>) -> Result<(Vec<T>, Vec<T>)> {
    let out = lbp_forward_with(net, t, r, LbpOptions::default())?;
    Ok((out.y_lo, out.y_hi))
}

pub fn lbp_forward_with<T: Scalar>(
    net: &Network,
    t: &InputBox<T>,
    r: &WeightBox<T>,
    opts: LbpOptions,
) -> Result<LbpOutput<T>> {
    check_shapes(net, t, r)?;
    let n0 = net.input_dim();

    // variable bounds in LBF layout
    let mut var_lo = t.lower.clone();
    let mut var_hi = t.upper.clone();
    let mut offsets = vec![0, n0];
    for k in 0..net.layers().len() {
        var_lo.extend_from_slice(net.layer_weights(&r.lower, k));
        var_hi.extend_from_slice(net.layer_weights(&r.upper, k));
        offsets.push(var_lo.len());
    }

    let unit = |j: usize| {
        let mut l = Lin::zeros(n0);
        l.c[j] = T::one();
        l
    };
    let mut z_lower: Vec<Lin<T>> = (0..n0).map(unit).collect();
    let mut z_upper = z_lower.clone();
    let mut z_lo = t.lower.clone();
    let mut z_hi = t.upper.clone();
    let mut layers = Vec::with_capacity(net.layers().len());
    let last = net.layers().len() - 1;

    for (k, layer) in net.layers().iter().enumerate() {
        let (rows, cols) = layer.weight_shape;
        let off = offsets[k + 1];
        let len = offsets[k + 2];
        let (w_lo, w_hi, bias) = layer_box(net, r, k);

        let mut pre_lower = Vec::with_capacity(rows);
        let mut pre_upper = Vec::with_capacity(rows);
        let mut pre_lo = Vec::with_capacity(rows);
        let mut pre_hi = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut lo = Lin::zeros(len);
            let mut hi = Lin::zeros(len);
            for j in 0..cols {
                let idx = i * cols + j;
                let (a, b) = (w_lo[idx], w_hi[idx]);
                // W z >= W^L z + W z^L - W^L z^L
                lo.add_scaled(if a >= T::zero() { &z_lower[j] } else { &z_upper[j] }, a);
                lo.c[off + idx] += z_lo[j];
                lo.k -= a * z_lo[j];
                // W z <= W^U z + W z^L - W^U z^L
                hi.add_scaled(if b >= T::zero() { &z_upper[j] } else { &z_lower[j] }, b);
                hi.c[off + idx] += z_lo[j];
                hi.k -= b * z_lo[j];
            }
            if let Some((b_lo, b_hi)) = bias {
                lo.k += b_lo[i];
                hi.k += b_hi[i];
            }
            pre_lo.push(lo.min_over(&var_lo[..len], &var_hi[..len]));
            pre_hi.push(hi.max_over(&var_lo[..len], &var_hi[..len]));
            pre_lower.push(lo);
            pre_upper.push(hi);
        }
        if opts.intersect_ibp {
            let (ib_lo, ib_hi) = affine_bounds(layer, w_lo, w_hi, bias, &z_lo, &z_hi);
            for i in 0..rows {
                pre_lo[i] = pre_lo[i].max(ib_lo[i]);
                pre_hi[i] = pre_hi[i].min(ib_hi[i]);
            }
        }
        let (post_lo, post_hi) = activate_bounds(layer.activation, &pre_lo, &pre_hi);

        if k == last {
            let wrap = |v: Vec<Lin<T>>, direction| {
                v.into_iter()
                    .map(|l| LinearBound {
                        direction,
                        coeffs: l.c,
                        lambda: l.k,
                        offsets: offsets.clone(),
                    })
                    .collect()
            };
            layers.push(LayerBounds {
                pre_lo: pre_lo.clone(),
                pre_hi: pre_hi.clone(),
                post_lo,
                post_hi,
            });
            return Ok(LbpOutput {
                y_lo: pre_lo,
                y_hi: pre_hi,
                lower: wrap(pre_lower, Direction::Lower),
                upper: wrap(pre_upper, Direction::Upper),
                layers,
            });
        }

        let mut next_lower = Vec::with_capacity(rows);
        let mut next_upper = Vec::with_capacity(rows);
        for i in 0..rows {
            let rel = relax_activation(layer.activation, pre_lo[i], pre_hi[i])?;
            let src = |slope: T, keep_lower: bool| {
                if (slope >= T::zero()) == keep_lower {
                    &pre_lower[i]
                } else {
                    &pre_upper[i]
                }
            };
            next_lower.push(src(rel.lower_slope, true).scaled(rel.lower_slope, rel.lower_intercept));
            next_upper.push(src(rel.upper_slope, false).scaled(rel.upper_slope, rel.upper_intercept));
        }
        layers.push(LayerBounds {
            pre_lo,
            pre_hi,
            post_lo: post_lo.clone(),
            post_hi: post_hi.clone(),
        });
        z_lower = next_lower;
        z_upper = next_upper;
        z_lo = post_lo;
        z_hi = post_hi;
    }
    unreachable!("network has at least one layer")
}
