use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{nll_and_grad, Dataset, Likelihood};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::posterior::GaussianPosterior;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub prior_variance: f64,
    pub likelihood: Likelihood,
    /// Multiplier of the KL term relative to the full-data likelihood.
    pub kl_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.01,
            prior_variance: 1.0,
            likelihood: Likelihood::Categorical,
            kl_weight: 1.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("prior_variance", self.prior_variance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.kl_weight >= 0.0) || !self.kl_weight.is_finite() {
            return Err(Error::invalid(format!("kl_weight = {} must be non-negative", self.kl_weight)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        self.likelihood.check()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalFit {
    pub posterior: GaussianPosterior<f64>,
    /// Per-data-point ELBO after each epoch on a fixed evaluation batch with
    /// fixed noise.
    pub elbo_history: Vec<f64>,
}

const INIT_STD: f64 = 0.05;
const EVAL_BATCH: usize = 256;
const EVAL_DRAWS: usize = 8;

fn softplus(r: f64) -> f64 {
    r.max(0.0) + (-r.abs()).exp().ln_1p()
}

fn sigmoid(r: f64) -> f64 {
    1.0 / (1.0 + (-r).exp())
}

fn kl(mu: &[f64], sigma: &[f64], prior_var: f64) -> f64 {
    let ln_s = 0.5 * prior_var.ln();
    mu.iter()
        .zip(sigma)
        .map(|(&m, &s)| ln_s - s.ln() + (s * s + m * m) / (2.0 * prior_var) - 0.5)
        .sum()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Reparameterized ELBO maximization with one weight draw per minibatch,
/// Adam, and a cosine learning-rate decay. Standard deviations are
/// `softplus(rho)`.
pub fn fit_vi(net: &Network, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<VariationalFit> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("variational fit needs a non-empty dataset"));
    }
    data.check(net, cfg.likelihood)?;
    let p = net.num_params();
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, INIT_STD.sqrt()).expect("valid std");
    let mut mu: Vec<f64> = (0..p).map(|_| init.sample(&mut rng)).collect();
    let rho0 = INIT_STD.exp_m1().ln();
    let mut rho = vec![rho0; p];
    let mut opt_mu = Adam::new(p);
    let mut opt_rho = Adam::new(p);

    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_E7A1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut eval_rng);
    let eval_idx: Vec<usize> = order[..n.min(EVAL_BATCH)].to_vec();
    let eval_noise: Vec<Vec<f64>> = (0..EVAL_DRAWS)
        .map(|_| (0..p).map(|_| StandardNormal.sample(&mut eval_rng)).collect())
        .collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; p];
    let mut eps = vec![0.0; p];
    let mut grad_w = vec![0.0; p];
    let mut g_mu = vec![0.0; p];
    let mut g_rho = vec![0.0; p];
    for epoch in 0..cfg.epochs {
        let frac = epoch as f64 / cfg.epochs as f64;
        let lr = cfg.learning_rate * (0.01 + 0.99 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()));
        idx.shuffle(&mut rng);
        for batch in idx.chunks(cfg.batch_size) {
            let sigma: Vec<f64> = rho.iter().map(|&r| softplus(r)).collect();
            for i in 0..p {
                eps[i] = StandardNormal.sample(&mut rng);
                w[i] = mu[i] + sigma[i] * eps[i];
            }
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            // loss per data point: mean batch NLL + kl_weight * KL / n
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                loss += scale * nll_and_grad(net, &w, data, i, cfg.likelihood, scale, Some(&mut grad_w));
            }
            let kw = cfg.kl_weight / n as f64;
            loss += kw * kl(&mu, &sigma, cfg.prior_variance);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for i in 0..p {
                g_mu[i] = grad_w[i] + kw * mu[i] / cfg.prior_variance;
                let g_sigma = grad_w[i] * eps[i] + kw * (sigma[i] / cfg.prior_variance - 1.0 / sigma[i]);
                g_rho[i] = g_sigma * sigmoid(rho[i]);
            }
            opt_mu.step(&mut mu, &g_mu, lr);
            opt_rho.step(&mut rho, &g_rho, lr);
        }

        let sigma: Vec<f64> = rho.iter().map(|&r| softplus(r)).collect();
        let mut nll = 0.0;
        for e in &eval_noise {
            for i in 0..p {
                w[i] = mu[i] + sigma[i] * e[i];
            }
            for &i in &eval_idx {
                nll += nll_and_grad(net, &w, data, i, cfg.likelihood, 0.0, None);
            }
        }
        nll /= (EVAL_DRAWS * eval_idx.len()) as f64;
        let elbo = -(nll + cfg.kl_weight * kl(&mu, &sigma, cfg.prior_variance) / n as f64);
        if !elbo.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: elbo {elbo:.5}, lr {lr:.2e}");
        history.push(elbo);
    }

    let variance = rho.iter().map(|&r| softplus(r).powi(2).max(f64::MIN_POSITIVE)).collect();
    Ok(VariationalFit {
        posterior: GaussianPosterior::new(mu, variance)?,
        elbo_history: history,
    })
}
