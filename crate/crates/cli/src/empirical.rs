//! Monte Carlo and attack-based estimates used to sanity-check certified
//! bounds. These are statistical estimates, never certificates.

use bnncert::{
    forward, pgd, pgd_expected, softmax, AttackConfig, InputBox, Network, Objective, OutputSpec, Posterior, WeightVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

/// Two-sided `1 - alpha` Clopper-Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize, alpha: f64) -> (f64, f64) {
    assert!(k <= n && n > 0, "need 0 <= k <= n and n > 0");
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).expect("valid beta").inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).expect("valid beta").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Hoeffding half-width for the mean of `n` samples in `[0, 1]` at level `1 - alpha`.
pub fn hoeffding_slack(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Center, corners (up to 10 dimensions) and seeded uniform points of `t`.
pub fn probe_points(t: &InputBox<f64>, n_random: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = t.dim();
    let mut pts = vec![t.center()];
    if d <= 10 {
        for mask in 0..(1usize << d) {
            pts.push((0..d).map(|i| if mask >> i & 1 == 1 { t.upper[i] } else { t.lower[i] }).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        pts.push(
            (0..d)
                .map(|i| if t.lower[i] == t.upper[i] { t.lower[i] } else { rng.random_range(t.lower[i]..=t.upper[i]) })
                .collect(),
        );
    }
    pts
}

/// Whether some probe point or a PGD search finds `x` in `t` with `f^w(x)` outside `s`.
pub fn finds_violation(
    net: &Network,
    w: &WeightVector<f64>,
    t: &InputBox<f64>,
    s: &OutputSpec<f64>,
    probes: &[Vec<f64>],
    attack: &AttackConfig,
) -> bnncert::Result<bool> {
    for x in probes {
        if !s.satisfied_by(&forward(net, w, x)?) {
            return Ok(true);
        }
    }
    let found = pgd(net, w, t, &Objective::SpecViolation(s.clone()), attack)?;
    Ok(found.value > 0.0 || !s.satisfied_by(&forward(net, w, &found.x)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub safe: usize,
    pub draws: usize,
}

impl McEstimate {
    pub fn fraction(&self) -> f64 {
        self.safe as f64 / self.draws as f64
    }

    /// 99% Clopper-Pearson interval.
    pub fn interval(&self) -> (f64, f64) {
        clopper_pearson(self.safe, self.draws, 0.01)
    }
}

/// Fraction of posterior draws for which no violation is found over `t`.
/// Attack misses make this an overestimate of `P_safe`.
pub fn mc_psafe(
    net: &Network,
    posterior: &Posterior<f64>,
    t: &InputBox<f64>,
    s: &OutputSpec<f64>,
    draws: usize,
    n_probes: usize,
    seed: u64,
    attack: &AttackConfig,
) -> bnncert::Result<McEstimate> {
    let probes = probe_points(t, n_probes, seed);
    let violated: Vec<bool> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let w = posterior.sample_with(&mut rng);
            finds_violation(net, &w, t, s, &probes, attack)
        })
        .collect::<bnncert::Result<_>>()?;
    Ok(McEstimate {
        safe: violated.iter().filter(|v| !**v).count(),
        draws,
    })
}

/// Seeded posterior draws, stream `i + 1` for draw `i`.
pub fn posterior_draws(posterior: &Posterior<f64>, n: usize, seed: u64) -> Vec<WeightVector<f64>> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            posterior.sample_with(&mut rng)
        })
        .collect()
}

/// Monte Carlo predictive mean of `softmax(f^w(x))[class]`.
pub fn predictive_mean(net: &Network, draws: &[WeightVector<f64>], x: &[f64], class: usize) -> bnncert::Result<f64> {
    let mut acc = 0.0;
    for w in draws {
        acc += softmax(&forward(net, w, x)?)?[class];
    }
    Ok(acc / draws.len() as f64)
}

/// Smallest and largest predictive mean over `n_probes` points of `t`: the
/// probe set plus the minimizer and maximizer found by attacking the
/// predictive mean itself (on a subset of draws).
pub fn predictive_extremes(
    net: &Network,
    draws: &[WeightVector<f64>],
    t: &InputBox<f64>,
    class: usize,
    n_probes: usize,
    seed: u64,
    attack: &AttackConfig,
) -> bnncert::Result<(f64, f64)> {
    let head = &draws[..draws.len().min(200)];
    let lo = pgd_expected(net, head, t, &Objective::Softmax { class, maximize: false }, attack)?;
    let hi = pgd_expected(net, head, t, &Objective::Softmax { class, maximize: true }, attack)?;
    let mut pts = vec![lo.x, hi.x];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pts.push(t.center());
    while pts.len() < n_probes.max(3) {
        pts.push(
            (0..t.dim())
                .map(|i| if t.lower[i] == t.upper[i] { t.lower[i] } else { rng.random_range(t.lower[i]..=t.upper[i]) })
                .collect(),
        );
    }
    let means: Vec<f64> = pts
        .par_iter()
        .map(|x| predictive_mean(net, draws, x, class))
        .collect::<bnncert::Result<_>>()?;
    Ok((
        means.iter().copied().fold(f64::INFINITY, f64::min),
        means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ))
}
