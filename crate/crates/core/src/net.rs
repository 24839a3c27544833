//! Feed-forward network architecture and deterministic evaluation.
//!
//! A [`Network`] only describes shapes and activations. Parameters live in a
//! separate [`WeightVector`] laid out in canonical order:
//! layer 0 weights (row-major, `rows x cols`), layer 0 biases, layer 1
//! weights, layer 1 biases, and so on. Posterior files, weight boxes and the
//! bound propagators all index this same flat parameter space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at `z`; relu uses 0 at the kink.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Activation::Identity => T::one(),
        }
    }
}

/// One affine layer followed by a pointwise activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// `(rows, cols)` = `(output dim, input dim)`.
    pub weight_shape: (usize, usize),
    #[serde(default = "default_true")]
    pub has_bias: bool,
    pub activation: Activation,
}

fn default_true() -> bool {
    true
}

impl LayerSpec {
    pub fn new(rows: usize, cols: usize, activation: Activation) -> Self {
        LayerSpec {
            weight_shape: (rows, cols),
            has_bias: true,
            activation,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.weight_shape.0
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.weight_shape.1
    }

    #[inline]
    pub fn weight_count(&self) -> usize {
        self.rows() * self.cols()
    }

    #[inline]
    pub fn param_count(&self) -> usize {
        self.weight_count() + if self.has_bias { self.rows() } else { 0 }
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    layers: Vec<LayerSpec>,
}

/// Validated feed-forward architecture.
///
/// Hidden layers use relu or tanh, the final layer is always the identity so
/// the network returns raw logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    layers: Vec<LayerSpec>,
    /// Offset of each layer's weight block in the flat parameter vector.
    offsets: Vec<usize>,
    num_params: usize,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        Network::new(repr.layers)
    }
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr { layers: net.layers }
    }
}

impl Network {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.rows() == 0 || layer.cols() == 0 {
                return Err(Error::invalid(format!("layer {k} has an empty weight shape")));
            }
            if k > 0 && layers[k - 1].rows() != layer.cols() {
                return Err(Error::dims(
                    format!("layer {k} input"),
                    layers[k - 1].rows(),
                    layer.cols(),
                ));
            }
            let last = k + 1 == layers.len();
            match (last, layer.activation) {
                (true, Activation::Identity) => {}
                (true, a) => {
                    return Err(Error::invalid(format!(
                        "final layer activation must be identity, got {a:?}"
                    )))
                }
                (false, Activation::Identity) => {
                    return Err(Error::invalid(format!(
                        "hidden layer {k} must use relu or tanh"
                    )))
                }
                (false, _) => {}
            }
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut acc = 0;
        for layer in &layers {
            offsets.push(acc);
            acc += layer.param_count();
        }
        Ok(Network {
            layers,
            offsets,
            num_params: acc,
        })
    }

    /// Convenience builder: `widths = [in, h1, ..., out]`, one activation for
    /// every hidden layer, biases everywhere.
    pub fn mlp(widths: &[usize], hidden: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("mlp needs input and output widths"));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n { Activation::Identity } else { hidden };
                LayerSpec::new(widths[k + 1], widths[k], act)
            })
            .collect();
        Network::new(layers)
    }

    #[inline]
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }

    /// Total parameter count `n_w`.
    #[inline]
    pub fn num_params(&self) -> usize {
        self.num_params
    }

    /// Offset of layer `k`'s weight matrix in the flat parameter vector.
    #[inline]
    pub fn weight_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Offset of layer `k`'s biases, if the layer has any.
    #[inline]
    pub fn bias_offset(&self, k: usize) -> Option<usize> {
        let l = &self.layers[k];
        l.has_bias.then(|| self.offsets[k] + l.weight_count())
    }

    /// Row-major weight block of layer `k`.
    #[inline]
    pub fn layer_weights<'a, T>(&self, params: &'a [T], k: usize) -> &'a [T] {
        let off = self.offsets[k];
        &params[off..off + self.layers[k].weight_count()]
    }

    #[inline]
    pub fn layer_bias<'a, T>(&self, params: &'a [T], k: usize) -> Option<&'a [T]> {
        self.bias_offset(k)
            .map(|off| &params[off..off + self.layers[k].rows()])
    }

    pub(crate) fn check_params(&self, len: usize, what: &str) -> Result<()> {
        if len != self.num_params {
            return Err(Error::dims(what.to_string(), self.num_params, len));
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, len: usize, what: &str) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::dims(format!("{what} (layer 0 input)"), self.input_dim(), len));
        }
        Ok(())
    }
}

/// Flat parameter vector in the canonical order documented on this module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector<T>(pub Vec<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        WeightVector(values)
    }

    pub fn zeros(net: &Network) -> Self {
        WeightVector(vec![T::zero(); net.num_params()])
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T> AsRef<[T]> for WeightVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// Affine map of one layer: `out = W z + b`.
#[inline]
fn affine<T: Scalar>(net: &Network, params: &[T], k: usize, z: &[T], out: &mut Vec<T>) {
    let layer = &net.layers()[k];
    let (rows, cols) = layer.weight_shape;
    let w = net.layer_weights(params, k);
    let b = net.layer_bias(params, k);
    out.clear();
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = T::zero();
        for j in 0..cols {
            acc += row[j] * z[j];
        }
        if let Some(b) = b {
            acc += b[i];
        }
        out.push(acc);
    }
}

/// Evaluates the network and returns the final pre-activation (logits).
pub fn forward<T: Scalar>(net: &Network, w: &WeightVector<T>, x: &[T]) -> Result<Vec<T>> {
    net.check_params(w.len(), "weight vector")?;
    net.check_input(x.len(), "input")?;
    Ok(forward_unchecked(net, w.as_slice(), x))
}

pub(crate) fn forward_unchecked<T: Scalar>(net: &Network, params: &[T], x: &[T]) -> Vec<T> {
    let mut z = x.to_vec();
    let mut pre = Vec::new();
    for (k, layer) in net.layers().iter().enumerate() {
        affine(net, params, k, &z, &mut pre);
        z.clear();
        z.extend(pre.iter().map(|&v| layer.activation.apply(v)));
    }
    pre
}

/// Vector-Jacobian product through the network.
///
/// Given `upstream = dL/dlogits`, returns `(dL/dx, dL/dw)` with `dL/dw` in
/// canonical parameter order.
pub fn backward<T: Scalar>(
    net: &Network,
    w: &WeightVector<T>,
    x: &[T],
    upstream: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    net.check_params(w.len(), "weight vector")?;
    net.check_input(x.len(), "input")?;
    if upstream.len() != net.output_dim() {
        return Err(Error::dims("upstream gradient", net.output_dim(), upstream.len()));
    }
    let mut grad_w = vec![T::zero(); net.num_params()];
    let grad_x = backward_into(net, w.as_slice(), x, upstream, &mut grad_w);
    Ok((grad_x, grad_w))
}

/// Accumulates `dL/dw` into `grad_w` and returns `dL/dx`.
pub(crate) fn backward_into<T: Scalar>(
    net: &Network,
    params: &[T],
    x: &[T],
    upstream: &[T],
    grad_w: &mut [T],
) -> Vec<T> {
    let n = net.layers().len();
    // inputs[k] is the input to layer k, pres[k] its pre-activation.
    let mut inputs: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut pres: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut z = x.to_vec();
    for (k, layer) in net.layers().iter().enumerate() {
        let mut pre = Vec::new();
        affine(net, params, k, &z, &mut pre);
        let next = pre.iter().map(|&v| layer.activation.apply(v)).collect();
        inputs.push(std::mem::replace(&mut z, next));
        pres.push(pre);
    }

    let mut delta: Vec<T> = upstream.to_vec();
    for k in (0..n).rev() {
        let layer = &net.layers()[k];
        let (rows, cols) = layer.weight_shape;
        if k + 1 != n {
            for (d, &p) in delta.iter_mut().zip(&pres[k]) {
                *d *= layer.activation.derivative(p);
            }
        }
        let w_off = net.weight_offset(k);
        let input = &inputs[k];
        for i in 0..rows {
            let di = delta[i];
            if di == T::zero() {
                continue;
            }
            let g = &mut grad_w[w_off + i * cols..w_off + (i + 1) * cols];
            for j in 0..cols {
                g[j] += di * input[j];
            }
        }
        if let Some(b_off) = net.bias_offset(k) {
            for i in 0..rows {
                grad_w[b_off + i] += delta[i];
            }
        }
        let wk = net.layer_weights(params, k);
        let mut prev = vec![T::zero(); cols];
        for i in 0..rows {
            let di = delta[i];
            let row = &wk[i * cols..(i + 1) * cols];
            for j in 0..cols {
                prev[j] += row[j] * di;
            }
        }
        delta = prev;
    }
    delta
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
