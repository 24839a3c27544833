//! Projected gradient attacks on fixed-weight networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{backward_into, forward_unchecked, softmax_unchecked, Network, WeightVector};
use crate::scalar::Scalar;
use crate::spec::{InputBox, OutputSpec};

/// Quantity the attack maximizes.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective<T> {
    /// Cross-entropy of `class`; untargeted misclassification.
    CrossEntropy { class: usize },
    /// `max_r -(C_r y + d_r)`: positive exactly when the spec is violated.
    SpecViolation(OutputSpec<T>),
    Logit { index: usize, maximize: bool },
    Softmax { class: usize, maximize: bool },
    /// `|y_index - reference|`.
    Deviation { index: usize, reference: T },
}

impl<T: Scalar> Objective<T> {
    fn check(&self, net: &Network) -> Result<()> {
        let n = net.output_dim();
        let idx = match self {
            Objective::CrossEntropy { class } | Objective::Softmax { class, .. } => *class,
            Objective::Logit { index, .. } | Objective::Deviation { index, .. } => *index,
            Objective::SpecViolation(s) => {
                if s.output_dim() != n {
                    return Err(Error::dims("output spec", n, s.output_dim()));
                }
                0
            }
        };
        if idx >= n {
            return Err(Error::invalid(format!("output index {idx} out of range for {n} outputs")));
        }
        Ok(())
    }

    /// Value and `d value / d y` at logits `y`.
    fn value_and_slope(&self, y: &[T]) -> (T, Vec<T>) {
        let mut g = vec![T::zero(); y.len()];
        match self {
            Objective::CrossEntropy { class } => {
                let p = softmax_unchecked(y);
                let m = y.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = m + y.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
                for (gi, pi) in g.iter_mut().zip(&p) {
                    *gi = *pi;
                }
                g[*class] -= T::one();
                (lse - y[*class], g)
            }
            Objective::SpecViolation(s) => {
                let rows = s.row_values(y);
                let r = crate::net::argmax(&rows.iter().map(|&v| -v).collect::<Vec<_>>());
                for (gi, &c) in g.iter_mut().zip(&s.c[r]) {
                    *gi = -c;
                }
                (-rows[r], g)
            }
            Objective::Logit { index, maximize } => {
                let s = if *maximize { T::one() } else { -T::one() };
                g[*index] = s;
                (s * y[*index], g)
            }
            Objective::Softmax { class, maximize } => {
                let p = softmax_unchecked(y);
                let s = if *maximize { T::one() } else { -T::one() };
                for (j, gi) in g.iter_mut().enumerate() {
                    let delta = if j == *class { T::one() } else { T::zero() };
                    *gi = s * p[*class] * (delta - p[j]);
                }
                (s * p[*class], g)
            }
            Objective::Deviation { index, reference } => {
                let d = y[*index] - *reference;
                g[*index] = if d >= T::zero() { T::one() } else { -T::one() };
                (d.abs(), g)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub iterations: usize,
    /// Fixed step; `None` means `2.5 * width / iterations` per dimension.
    pub step_size: Option<f64>,
    /// Random starts in addition to the center start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            iterations: 25,
            step_size: None,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
}

pub fn objective_value<T: Scalar>(net: &Network, w: &WeightVector<T>, x: &[T], obj: &Objective<T>) -> Result<T> {
    check(net, w, x, obj)?;
    Ok(obj.value_and_slope(&forward_unchecked(net, w.as_slice(), x)).0)
}

/// Gradient of the objective with respect to the input.
pub fn grad<T: Scalar>(net: &Network, w: &WeightVector<T>, x: &[T], obj: &Objective<T>) -> Result<Vec<T>> {
    check(net, w, x, obj)?;
    Ok(value_and_grad(net, w.as_slice(), x, obj).1)
}

fn check<T: Scalar>(net: &Network, w: &WeightVector<T>, x: &[T], obj: &Objective<T>) -> Result<()> {
    net.check_params(w.len(), "weight vector")?;
    net.check_input(x.len(), "attack input")?;
    obj.check(net)
}

fn value_and_grad<T: Scalar>(net: &Network, w: &[T], x: &[T], obj: &Objective<T>) -> (T, Vec<T>) {
    let y = forward_unchecked(net, w, x);
    let (v, slope) = obj.value_and_slope(&y);
    let mut scratch = vec![T::zero(); w.len()];
    (v, backward_into(net, w, x, &slope, &mut scratch))
}

/// Maximizes the objective over `t` for a single weight vector.
pub fn pgd<T: Scalar>(
    net: &Network,
    w: &WeightVector<T>,
    t: &InputBox<T>,
    obj: &Objective<T>,
    cfg: &AttackConfig,
) -> Result<AttackOutcome<T>> {
    check(net, w, &t.lower, obj)?;
    let weights = std::slice::from_ref(w);
    run(net, weights, t, obj, cfg)
}

/// Maximizes the mean objective over several weight vectors, e.g. to
/// minimize the predictive mean of a class with `Softmax { maximize: false }`.
pub fn pgd_expected<T: Scalar>(
    net: &Network,
    samples: &[WeightVector<T>],
    t: &InputBox<T>,
    obj: &Objective<T>,
    cfg: &AttackConfig,
) -> Result<AttackOutcome<T>> {
    if samples.is_empty() {
        return Err(Error::invalid("expected-value attack needs at least one weight sample"));
    }
    for w in samples {
        check(net, w, &t.lower, obj)?;
    }
    run(net, samples, t, obj, cfg)
}

fn run<T: Scalar>(
    net: &Network,
    samples: &[WeightVector<T>],
    t: &InputBox<T>,
    obj: &Objective<T>,
    cfg: &AttackConfig,
) -> Result<AttackOutcome<T>> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("attack needs at least one iteration"));
    }
    let inv = T::one() / T::lit(samples.len() as f64);
    let eval = |x: &[T]| {
        let mut v = T::zero();
        let mut g = vec![T::zero(); x.len()];
        for w in samples {
            let (vi, gi) = value_and_grad(net, w.as_slice(), x, obj);
            v += vi * inv;
            for (a, b) in g.iter_mut().zip(gi) {
                *a += b * inv;
            }
        }
        (v, g)
    };
    let steps: Vec<T> = match cfg.step_size {
        Some(s) => vec![T::lit(s); t.dim()],
        None => t
            .lower
            .iter()
            .zip(&t.upper)
            .map(|(&l, &h)| (h - l) * T::lit(2.5) / T::lit(cfg.iterations as f64))
            .collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = AttackOutcome {
        x: t.center(),
        value: T::neg_infinity(),
    };
    for restart in 0..=cfg.restarts {
        let mut x = if restart == 0 {
            t.center()
        } else {
            t.lower
                .iter()
                .zip(&t.upper)
                .map(|(&l, &h)| l + (h - l) * T::lit(rng.random::<f64>()))
                .collect()
        };
        t.project(&mut x);
        for it in 0..=cfg.iterations {
            let (v, g) = eval(&x);
            if v > best.value || (best.value == T::neg_infinity() && it == 0 && restart == 0) {
                best = AttackOutcome { x: x.clone(), value: v };
            }
            if it == cfg.iterations {
                break;
            }
            for ((xi, gi), si) in x.iter_mut().zip(&g).zip(&steps) {
                if *gi > T::zero() {
                    *xi += *si;
                } else if *gi < T::zero() {
                    *xi -= *si;
                }
            }
            t.project(&mut x);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, LayerSpec};

    fn random_net(seed: u64, act: Activation) -> (Network, WeightVector<f64>) {
        let net = Network::mlp(&[3, 6, 4], act).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..net.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        (net, WeightVector(w))
    }

    fn fd_check(net: &Network, w: &WeightVector<f64>, x: &[f64], obj: &Objective<f64>) {
        let g = grad(net, w, x, obj).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[i] += h;
            b[i] -= h;
            let fd = (objective_value(net, w, &a, obj).unwrap() - objective_value(net, w, &b, obj).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-5f64.max(1e-3 * g[i].abs()), "{obj:?} dim {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let (net, w) = random_net(seed, Activation::Tanh);
            let x = [0.3, -0.2, 0.7];
            fd_check(&net, &w, &x, &Objective::CrossEntropy { class: 1 });
            fd_check(&net, &w, &x, &Objective::Softmax { class: 2, maximize: false });
            fd_check(&net, &w, &x, &Objective::Logit { index: 0, maximize: true });
        }
    }

    #[test]
    fn relu_gradient_away_from_kinks() {
        let (net, w) = random_net(4, Activation::Relu);
        let x = [0.11, -0.37, 0.52];
        let y = forward_unchecked(&net, w.as_slice(), &x);
        assert!(y.iter().all(|v| v.is_finite()));
        fd_check(&net, &w, &x, &Objective::CrossEntropy { class: 0 });
    }

    #[test]
    fn linear_gradient() {
        let net = Network::new(vec![LayerSpec::new(1, 1, Activation::Identity)]).unwrap();
        let w = WeightVector(vec![2.0, 0.0]);
        for x in [-3.0, 0.0, 5.0] {
            let g = grad(&net, &w, &[x], &Objective::Logit { index: 0, maximize: true }).unwrap();
            assert_eq!(g, vec![2.0]);
        }
    }

    #[test]
    fn cross_entropy_slope_at_uniform_prediction() {
        // identity net from 3 inputs to 3 logits: d/dx = d/dy
        let mut w = vec![0.0f64; 12];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let net = Network::new(vec![LayerSpec::new(3, 3, Activation::Identity)]).unwrap();
        let g = grad(&net, &WeightVector(w), &[0.4, 0.4, 0.4], &Objective::CrossEntropy { class: 1 }).unwrap();
        let third = 1.0 / 3.0;
        for (gi, want) in g.iter().zip([third, third - 1.0, third]) {
            assert!((gi - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pgd_stays_in_box_and_finds_boundary() {
        let net = Network::new(vec![LayerSpec::new(1, 1, Activation::Identity)]).unwrap();
        let w = WeightVector(vec![1.5, 0.2]);
        let t = InputBox::new(vec![-0.3], vec![0.8]).unwrap();
        let out = pgd(&net, &w, &t, &Objective::Logit { index: 0, maximize: false }, &AttackConfig::default()).unwrap();
        assert_eq!(out.x, vec![-0.3]);
        let t = InputBox::point(&[0.25]).unwrap();
        let out = pgd(&net, &w, &t, &Objective::Logit { index: 0, maximize: true }, &AttackConfig::default()).unwrap();
        assert_eq!(out.x, vec![0.25]);
    }

    #[test]
    fn never_worse_than_center_and_monotone_in_restarts() {
        for seed in 0..10 {
            let (net, w) = random_net(seed, Activation::Relu);
            let t = InputBox::new(vec![-0.5, -0.5, -0.5], vec![0.5, 0.5, 0.5]).unwrap();
            let obj = Objective::CrossEntropy { class: 0 };
            let center = objective_value(&net, &w, &t.center(), &obj).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for restarts in 0..4 {
                let cfg = AttackConfig { restarts, seed, ..AttackConfig::default() };
                let out = pgd(&net, &w, &t, &obj, &cfg).unwrap();
                assert!(t.contains_point(&out.x));
                assert!(out.value >= center);
                assert!(out.value >= prev);
                prev = out.value;
            }
        }
    }

    #[test]
    fn spec_violation_and_expected_attack() {
        // logits [0.25, x]; class 0 is violated iff x > 0.25
        let net = Network::new(vec![LayerSpec::new(2, 1, Activation::Identity)]).unwrap();
        let w = WeightVector(vec![0.0f64, 1.0, 0.25, 0.0]);
        let spec = OutputSpec::argmax(0, 2).unwrap();
        let t = InputBox::new(vec![-0.4], vec![0.4]).unwrap();
        let out = pgd(&net, &w, &t, &Objective::SpecViolation(spec), &AttackConfig::default()).unwrap();
        assert_eq!(out.x, vec![0.4]);
        assert!((out.value - 0.15).abs() < 1e-12);

        let samples = vec![w.clone(), WeightVector(vec![0.0, 2.0, 0.25, 0.0])];
        let out = pgd_expected(&net, &samples, &t, &Objective::Softmax { class: 0, maximize: false }, &AttackConfig::default()).unwrap();
        assert_eq!(out.x, vec![0.4]);
        assert!(pgd_expected(&net, &[], &t, &Objective::Logit { index: 0, maximize: true }, &AttackConfig::default()).is_err());
    }

    #[test]
    fn rejects_bad_objective_index() {
        let (net, w) = random_net(0, Activation::Tanh);
        assert!(grad(&net, &w, &[0.0; 3], &Objective::Logit { index: 9, maximize: true }).is_err());
    }
}
