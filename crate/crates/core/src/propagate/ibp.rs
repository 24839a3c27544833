use super::{check_shapes, Interval};
use crate::error::Result;
use crate::net::{Activation, LayerSpec, Network};
use crate::posterior::WeightBox;
use crate::scalar::{widen, Scalar};
use crate::spec::InputBox;

/// Pre- and post-activation bounds of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerBounds<T> {
    pub pre_lo: Vec<T>,
    pub pre_hi: Vec<T>,
    pub post_lo: Vec<T>,
    pub post_hi: Vec<T>,
}

/// Interval image of one layer given bounds on its weights, biases and input.
///
/// `w_lo`/`w_hi` are row-major `rows x cols`; absent biases count as zero.
pub fn ibp_layer<T: Scalar>(
    layer: &LayerSpec,
    w_lo: &[T],
    w_hi: &[T],
    bias: Option<(&[T], &[T])>,
    z_lo: &[T],
    z_hi: &[T],
) -> LayerBounds<T> {
    let (pre_lo, pre_hi) = affine_bounds(layer, w_lo, w_hi, bias, z_lo, z_hi);
    let (post_lo, post_hi) = activate_bounds(layer.activation, &pre_lo, &pre_hi);
    LayerBounds {
        pre_lo,
        pre_hi,
        post_lo,
        post_hi,
    }
}

pub(crate) fn affine_bounds<T: Scalar>(
    layer: &LayerSpec,
    w_lo: &[T],
    w_hi: &[T],
    bias: Option<(&[T], &[T])>,
    z_lo: &[T],
    z_hi: &[T],
) -> (Vec<T>, Vec<T>) {
    let (rows, cols) = layer.weight_shape;
    let mut lo = Vec::with_capacity(rows);
    let mut hi = Vec::with_capacity(rows);
    for i in 0..rows {
        let (mut acc_lo, mut acc_hi, mut mag) = (T::zero(), T::zero(), T::zero());
        for j in 0..cols {
            let w = Interval { lo: w_lo[i * cols + j], hi: w_hi[i * cols + j] };
            let t = w.times(Interval { lo: z_lo[j], hi: z_hi[j] });
            acc_lo += t.lo;
            acc_hi += t.hi;
            mag += t.lo.abs().max(t.hi.abs());
        }
        if let Some((b_lo, b_hi)) = bias {
            acc_lo += b_lo[i];
            acc_hi += b_hi[i];
            mag += b_lo[i].abs().max(b_hi[i].abs());
        }
        let (l, h) = widen(acc_lo, acc_hi, mag);
        lo.push(l);
        hi.push(h);
    }
    (lo, hi)
}

/// Monotone activations map interval endpoints to interval endpoints.
pub(crate) fn activate_bounds<T: Scalar>(act: Activation, lo: &[T], hi: &[T]) -> (Vec<T>, Vec<T>) {
    let mut out_lo = Vec::with_capacity(lo.len());
    let mut out_hi = Vec::with_capacity(lo.len());
    for (&l, &h) in lo.iter().zip(hi) {
        let (a, b) = (act.apply(l), act.apply(h));
        let (a, b) = match act {
            // libm tanh is not guaranteed correctly rounded
            Activation::Tanh => {
                let (a, b) = widen(a, b, a.abs().max(b.abs()));
                (a.max(-T::one()), b.min(T::one()))
            }
            _ => (a, b),
        };
        out_lo.push(a);
        out_hi.push(b);
    }
    (out_lo, out_hi)
}

/// Weight bounds and optional bias bounds of one layer.
pub(crate) type LayerBox<'a, T> = (&'a [T], &'a [T], Option<(&'a [T], &'a [T])>);

pub(crate) fn layer_box<'a, T: Scalar>(net: &Network, r: &'a WeightBox<T>, k: usize) -> LayerBox<'a, T> {
    let w_lo = net.layer_weights(&r.lower, k);
    let w_hi = net.layer_weights(&r.upper, k);
    let bias = net
        .layer_bias(&r.lower, k)
        .zip(net.layer_bias(&r.upper, k));
    (w_lo, w_hi, bias)
}

/// Interval bound propagation through every layer; returns logit bounds.
pub fn ibp_forward<T: Scalar>(net: &Network, t: &InputBox<T>, r: &WeightBox<T>) -> Result<(Vec<T>, Vec<T>)> {
    check_shapes(net, t, r)?;
    let mut z_lo = t.lower.clone();
    let mut z_hi = t.upper.clone();
    let n = net.layers().len();
    for (k, layer) in net.layers().iter().enumerate() {
        let (w_lo, w_hi, bias) = layer_box(net, r, k);
        let (pre_lo, pre_hi) = affine_bounds(layer, w_lo, w_hi, bias, &z_lo, &z_hi);
        if k + 1 == n {
            return Ok((pre_lo, pre_hi));
        }
        (z_lo, z_hi) = activate_bounds(layer.activation, &pre_lo, &pre_hi);
    }
    unreachable!("network has at least one layer")
}
