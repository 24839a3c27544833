//! Desk-scale posterior producers: diagonal-Gaussian variational inference
//! and Hamiltonian Monte Carlo, plus synthetic datasets.

mod data;
mod hmc;
mod vi;

pub use data::{cubic_regression, hcas_label, hcas_like, two_blobs, HCAS_CLASSES};
pub use hmc::{sample_hmc, HmcConfig, HmcResult};
pub use vi::{fit_vi, TrainConfig, VariationalFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{backward_into, forward_unchecked, softmax_unchecked, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labels {
    Classes(Vec<usize>),
    /// One target vector per example, of length `output_dim`.
    Values(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Labels,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Checks shapes against `net` and the likelihood.
    pub fn check(&self, net: &Network, likelihood: Likelihood) -> Result<()> {
        let n = self.inputs.len();
        for (i, x) in self.inputs.iter().enumerate() {
            if x.len() != net.input_dim() {
                return Err(Error::dims(format!("example {i} input"), net.input_dim(), x.len()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("example {i} input")));
            }
        }
        match (&self.labels, likelihood) {
            (Labels::Classes(c), Likelihood::Categorical) => {
                if c.len() != n {
                    return Err(Error::dims("class labels", n, c.len()));
                }
                if let Some(&bad) = c.iter().find(|&&c| c >= net.output_dim()) {
                    return Err(Error::invalid(format!(
                        "class label {bad} out of range for {} outputs",
                        net.output_dim()
                    )));
                }
            }
            (Labels::Values(v), Likelihood::Gaussian { .. }) => {
                if v.len() != n {
                    return Err(Error::dims("regression targets", n, v.len()));
                }
                if let Some(t) = v.iter().find(|t| t.len() != net.output_dim()) {
                    return Err(Error::dims("regression target", net.output_dim(), t.len()));
                }
            }
            _ => return Err(Error::invalid("labels do not match the likelihood")),
        }
        Ok(())
    }

    /// Fraction of examples whose argmax prediction matches the label.
    pub fn accuracy(&self, net: &Network, w: &[f64]) -> f64 {
        let Labels::Classes(c) = &self.labels else {
            return f64::NAN;
        };
        let hits = self
            .inputs
            .iter()
            .zip(c)
            .filter(|(x, &c)| crate::net::argmax(&forward_unchecked(net, w, x)) == c)
            .count();
        hits as f64 / self.len().max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Likelihood {
    Categorical,
    Gaussian { noise_var: f64 },
}

impl Likelihood {
    fn check(&self) -> Result<()> {
        if let Likelihood::Gaussian { noise_var } = self {
            if !(*noise_var > 0.0) || !noise_var.is_finite() {
                return Err(Error::invalid(format!("noise variance {noise_var} must be positive")));
            }
        }
        Ok(())
    }
}

/// Negative log-likelihood of example `i` (up to a constant), accumulating
/// `scale * d nll / d w` into `grad`.
fn nll_and_grad(
    net: &Network,
    w: &[f64],
    data: &Dataset,
    i: usize,
    likelihood: Likelihood,
    scale: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let x = &data.inputs[i];
    let y = forward_unchecked(net, w, x);
    let (nll, mut slope) = match (&data.labels, likelihood) {
        (Labels::Classes(c), _) => {
            let c = c[i];
            let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + y.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let mut p = softmax_unchecked(&y);
            p[c] -= 1.0;
            (lse - y[c], p)
        }
        (Labels::Values(v), Likelihood::Gaussian { noise_var }) => {
            let t = &v[i];
            let r: Vec<f64> = y.iter().zip(t).map(|(a, b)| a - b).collect();
            let nll = r.iter().map(|e| e * e).sum::<f64>() / (2.0 * noise_var);
            (nll, r.into_iter().map(|e| e / noise_var).collect())
        }
        (Labels::Values(_), Likelihood::Categorical) => unreachable!("checked by Dataset::check"),
    };
    if let Some(g) = grad {
        for s in slope.iter_mut() {
            *s *= scale;
        }
        backward_into(net, w, x, &slope, g);
    }
    nll
}
