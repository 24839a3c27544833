//! Linear search over the input radius for the largest certified-robust
//! (MaxRR) and smallest certified-unrobust (MinUR) `l_inf` radius.

use serde::{Deserialize, Serialize};

use crate::certify::{psafe_lower, psafe_upper, CertifyConfig};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::posterior::Posterior;
use crate::scalar::Scalar;
use crate::spec::{linf_ball, Clip, Epsilon, OutputSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSearchConfig {
    pub tau_safe: f64,
    pub tau_unsafe: f64,
    pub eps_start_safe: f64,
    pub eps_start_unsafe: f64,
    pub step: f64,
    pub eps_cap: f64,
    /// Feature range the balls are clipped to.
    #[serde(default)]
    pub clip: Option<(f64, f64)>,
}

impl Default for RadiusSearchConfig {
    fn default() -> Self {
        RadiusSearchConfig {
            tau_safe: 0.7,
            tau_unsafe: 0.7,
            eps_start_safe: 0.0,
            eps_start_unsafe: 0.5,
            step: 0.01,
            eps_cap: 0.5,
            clip: None,
        }
    }
}

impl RadiusSearchConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.tau_safe > 0.0 && self.tau_safe <= 1.0) {
            return bad(format!("tau_safe = {} must lie in (0, 1]", self.tau_safe));
        }
        if !(self.tau_unsafe >= 0.0 && self.tau_unsafe < 1.0) {
            return bad(format!("tau_unsafe = {} must lie in [0, 1)", self.tau_unsafe));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad(format!("step = {} must be positive", self.step));
        }
        if !(self.eps_start_safe >= 0.0 && self.eps_start_unsafe >= 0.0) {
            return bad("radius search starts must be non-negative".into());
        }
        if !(self.eps_cap >= self.eps_start_safe && self.eps_cap >= self.eps_start_unsafe) {
            return bad(format!("eps_cap = {} is below a start radius", self.eps_cap));
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo <= hi) {
                return bad(format!("clip range [{lo}, {hi}] is empty"));
            }
        }
        Ok(())
    }

    /// Grid point `start + k * step`, snapped to the cap.
    fn grid(&self, start: f64, k: i64) -> f64 {
        let eps = start + k as f64 * self.step;
        if (eps - self.eps_cap).abs() < 1e-12 {
            self.eps_cap
        } else {
            eps
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusResult {
    pub radius: f64,
    /// Nothing on the grid was certified; `radius` is only the search cap.
    pub vacuous: bool,
}

fn ball<T: Scalar>(x: &[T], eps: f64, rcfg: &RadiusSearchConfig) -> Result<crate::spec::InputBox<T>> {
    let clip = rcfg.clip.map(|(lo, hi)| Clip::uniform(T::lit(lo), T::lit(hi), x.len()));
    linf_ball(x, &Epsilon::Uniform(T::lit(eps)), clip.as_ref())
}

/// Largest grid radius `eps_start_safe + k * step` whose lower bound
/// exceeds `tau_safe`, scanning upward and stopping at the first failure.
/// Returns 0 when the first radius already fails.
pub fn max_robust_radius<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    x: &[T],
    s: &OutputSpec<T>,
    cfg: &CertifyConfig,
    rcfg: &RadiusSearchConfig,
) -> Result<f64> {
    rcfg.validate()?;
    let mut best = 0.0;
    for k in 0.. {
        let eps = rcfg.grid(rcfg.eps_start_safe, k);
        if eps > rcfg.eps_cap {
            break;
        }
        let lower = psafe_lower(net, posterior, &ball(x, eps, rcfg)?, s, cfg)?.value.scalar();
        log::trace!("MaxRR probe eps={eps}: lower {lower}");
        if lower > rcfg.tau_safe {
            best = eps;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Smallest grid radius whose upper bound falls below `tau_unsafe`.
///
/// From `eps_start_unsafe` the radius decreases while the bound still
/// certifies; if the start does not certify, it increases up to `eps_cap`.
pub fn min_unrobust_radius<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    x: &[T],
    s: &OutputSpec<T>,
    cfg: &CertifyConfig,
    rcfg: &RadiusSearchConfig,
) -> Result<RadiusResult> {
    rcfg.validate()?;
    let certified = |eps: f64| -> Result<bool> {
        let upper = psafe_upper(net, posterior, &ball(x, eps, rcfg)?, s, cfg)?.value.scalar();
        log::trace!("MinUR probe eps={eps}: upper {upper}");
        Ok(upper < rcfg.tau_unsafe)
    };
    let start = rcfg.eps_start_unsafe;
    if certified(start)? {
        let mut best = start;
        for k in 1.. {
            let eps = rcfg.grid(start, -k);
            if eps < -1e-12 || !certified(eps.max(0.0))? {
                break;
            }
            best = eps.max(0.0);
        }
        return Ok(RadiusResult { radius: best, vacuous: false });
    }
    for k in 1.. {
        let eps = rcfg.grid(start, k);
        if eps > rcfg.eps_cap {
            break;
        }
        if certified(eps)? {
            return Ok(RadiusResult { radius: eps, vacuous: false });
        }
    }
    Ok(RadiusResult {
        radius: rcfg.eps_cap,
        vacuous: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, LayerSpec, WeightVector};
    use crate::posterior::{GaussianPosterior, SamplePosterior};

    fn threshold_posterior() -> (Network, Posterior<f64>) {
        // logits [0.25, x]: class 0 holds iff x <= 0.25
        let net = Network::new(vec![LayerSpec::new(2, 1, Activation::Identity)]).unwrap();
        let post = SamplePosterior::uniform(vec![WeightVector(vec![0.0, 1.0, 0.25, 0.0])]).unwrap();
        (net, post.into())
    }

    fn cfg() -> CertifyConfig {
        CertifyConfig { num_samples: 5, gamma: 0.0, ..CertifyConfig::default() }
    }

    fn on_grid(v: f64, start: f64, step: f64) -> bool {
        let k = ((v - start) / step).round();
        (start + k * step - v).abs() < 1e-12
    }

    #[test]
    fn flip_radius_is_found_within_one_step() {
        let (net, post) = threshold_posterior();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let rcfg = RadiusSearchConfig { tau_safe: 0.98, tau_unsafe: 0.05, ..RadiusSearchConfig::default() };
        let min_ur = min_unrobust_radius(&net, &post, &[0.0], &s, &cfg(), &rcfg).unwrap();
        assert!(!min_ur.vacuous);
        assert!((min_ur.radius - 0.25).abs() <= 0.01 + 1e-12, "{min_ur:?}");
        assert!(on_grid(min_ur.radius, 0.5, 0.01));
        let max_rr = max_robust_radius(&net, &post, &[0.0], &s, &cfg(), &rcfg).unwrap();
        assert!((max_rr - 0.25).abs() <= 0.01 + 1e-12, "{max_rr}");
        assert!(max_rr < min_ur.radius);
        assert!(on_grid(max_rr, 0.0, 0.01));
    }

    #[test]
    fn upward_search_from_a_small_start() {
        let (net, post) = threshold_posterior();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let rcfg = RadiusSearchConfig { eps_start_unsafe: 0.1, ..RadiusSearchConfig::default() };
        let r = min_unrobust_radius(&net, &post, &[0.0], &s, &cfg(), &rcfg).unwrap();
        assert!((r.radius - 0.26).abs() < 1e-9 && !r.vacuous);
    }

    #[test]
    fn constant_network_is_safe_to_the_cap() {
        // logits are the biases [1, 0] regardless of x
        let net = Network::new(vec![LayerSpec::new(2, 1, Activation::Identity)]).unwrap();
        let post: Posterior<f64> = GaussianPosterior::new(vec![0.0, 0.0, 1.0, 0.0], vec![1e-12; 4]).unwrap().into();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let rcfg = RadiusSearchConfig { tau_safe: 0.5, eps_cap: 0.3, eps_start_unsafe: 0.3, ..RadiusSearchConfig::default() };
        let cfg = CertifyConfig { num_samples: 3, gamma: 3.0, ..CertifyConfig::default() };
        let max_rr = max_robust_radius(&net, &post, &[0.0], &s, &cfg, &rcfg).unwrap();
        assert_eq!(max_rr, 0.3);
        let min_ur = min_unrobust_radius(&net, &post, &[0.0], &s, &cfg, &rcfg).unwrap();
        assert_eq!(min_ur, RadiusResult { radius: 0.3, vacuous: true });
    }

    #[test]
    fn violated_center_gives_zero_radius() {
        let (net, post) = threshold_posterior();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let max_rr = max_robust_radius(&net, &post, &[1.0], &s, &cfg(), &RadiusSearchConfig::default()).unwrap();
        assert_eq!(max_rr, 0.0);
        let r = min_unrobust_radius(&net, &post, &[1.0], &s, &cfg(), &RadiusSearchConfig::default()).unwrap();
        assert_eq!(r.radius, 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let (net, post) = threshold_posterior();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let rcfg = RadiusSearchConfig { step: 0.0, ..RadiusSearchConfig::default() };
        assert!(max_robust_radius(&net, &post, &[0.0], &s, &cfg(), &rcfg).is_err());
        let rcfg = RadiusSearchConfig { eps_cap: 0.1, ..RadiusSearchConfig::default() };
        assert!(min_unrobust_radius(&net, &post, &[0.0], &s, &cfg(), &rcfg).is_err());
    }
}
