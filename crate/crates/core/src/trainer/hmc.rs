use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{nll_and_grad, Dataset, Likelihood};
use crate::error::{Error, Result};
use crate::net::{Network, WeightVector};
use crate::posterior::SamplePosterior;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub step_size: f64,
    pub num_samples: usize,
    pub burn_in: usize,
    pub prior_variance: f64,
    pub likelihood: Likelihood,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            leapfrog_steps: 20,
            step_size: 0.005,
            num_samples: 200,
            burn_in: 100,
            prior_variance: 1.0,
            likelihood: Likelihood::Categorical,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcResult {
    pub posterior: SamplePosterior<f64>,
    /// Metropolis acceptance rate over all transitions, burn-in included.
    pub acceptance_rate: f64,
    /// Trajectories whose energy became non-finite; always rejected.
    pub nonfinite_trajectories: usize,
    pub warning: Option<String>,
}

/// Potential energy (negative log posterior up to a constant) and gradient.
fn potential(net: &Network, data: &Dataset, w: &[f64], cfg: &HmcConfig, grad: &mut [f64]) -> f64 {
    for (g, &v) in grad.iter_mut().zip(w) {
        *g = v / cfg.prior_variance;
    }
    let mut u = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * cfg.prior_variance);
    for i in 0..data.len() {
        u += nll_and_grad(net, w, data, i, cfg.likelihood, 1.0, Some(grad));
    }
    u
}

/// Hamiltonian Monte Carlo with unit mass matrix. An empty dataset samples
/// the Gaussian prior.
pub fn sample_hmc(net: &Network, data: &Dataset, cfg: &HmcConfig, seed: u64) -> Result<HmcResult> {
    if !(cfg.step_size > 0.0) || !cfg.step_size.is_finite() || !(cfg.prior_variance > 0.0) {
        return Err(Error::invalid("HMC step size and prior variance must be positive"));
    }
    if cfg.leapfrog_steps == 0 || cfg.num_samples == 0 {
        return Err(Error::invalid("HMC needs at least one leapfrog step and one sample"));
    }
    cfg.likelihood.check()?;
    data.check(net, cfg.likelihood)?;
    let p = net.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 0.05f64.sqrt()).expect("valid std");
    let mut w: Vec<f64> = (0..p).map(|_| init.sample(&mut rng)).collect();
    let mut grad = vec![0.0; p];
    let mut u = potential(net, data, &w, cfg, &mut grad);
    if !u.is_finite() {
        return Err(Error::NonFinite("initial HMC potential".into()));
    }

    let mut samples = Vec::with_capacity(cfg.num_samples);
    let (mut accepted, mut nonfinite) = (0usize, 0usize);
    let total = cfg.burn_in + cfg.num_samples;
    let eps = cfg.step_size;
    let mut w_new = vec![0.0; p];
    let mut g_new = vec![0.0; p];
    let mut mom = vec![0.0; p];
    for it in 0..total {
        for m in mom.iter_mut() {
            *m = StandardNormal.sample(&mut rng);
        }
        let h0 = u + 0.5 * mom.iter().map(|m| m * m).sum::<f64>();
        w_new.copy_from_slice(&w);
        g_new.copy_from_slice(&grad);
        let mut u_new = u;
        for (m, g) in mom.iter_mut().zip(&g_new) {
            *m -= 0.5 * eps * g;
        }
        for l in 0..cfg.leapfrog_steps {
            for (x, m) in w_new.iter_mut().zip(&mom) {
                *x += eps * m;
            }
            u_new = potential(net, data, &w_new, cfg, &mut g_new);
            let s = if l + 1 == cfg.leapfrog_steps { 0.5 } else { 1.0 };
            for (m, g) in mom.iter_mut().zip(&g_new) {
                *m -= s * eps * g;
            }
        }
        let h1 = u_new + 0.5 * mom.iter().map(|m| m * m).sum::<f64>();
        let log_ratio = h0 - h1;
        if !log_ratio.is_finite() {
            nonfinite += 1;
        } else if rng.random::<f64>().ln() < log_ratio {
            std::mem::swap(&mut w, &mut w_new);
            std::mem::swap(&mut grad, &mut g_new);
            u = u_new;
            accepted += 1;
        }
        if it >= cfg.burn_in {
            samples.push(WeightVector(w.clone()));
        }
    }
    let acceptance_rate = accepted as f64 / total as f64;
    let warning = (acceptance_rate < 0.1).then(|| {
        let msg = format!("HMC acceptance rate {acceptance_rate:.3} is below 0.1; consider a smaller step size");
        log::warn!("{msg}");
        msg
    });
    log::info!("HMC acceptance rate {acceptance_rate:.3}, {nonfinite} non-finite trajectories");
    Ok(HmcResult {
        posterior: SamplePosterior::uniform(samples)?,
        acceptance_rate,
        nonfinite_trajectories: nonfinite,
        warning,
    })
}
