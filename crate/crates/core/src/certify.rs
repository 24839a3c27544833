//! Sound lower/upper bounds on probabilistic robustness (`P_safe`) and on
//! the posterior-predictive decision (`D_safe`), plus decision rules built
//! on them.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{pgd, AttackConfig, Objective};
use crate::error::{Error, Result};
use crate::net::{Network, WeightVector};
use crate::posterior::{bonferroni_bounds, bonferroni_weighted_lower, disjointify, MarginScale, Posterior, WeightBox};
use crate::propagate::{propagate, Direction, Method};
use crate::scalar::Scalar;
use crate::spec::{InputBox, OutputSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Bonferroni {
    /// Greedily drop boxes that overlap an earlier one and sum the rest.
    #[default]
    Off,
    /// Keep overlapping boxes and bound the union by inclusion-exclusion
    /// truncated at an even `depth`.
    On { depth: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub num_samples: usize,
    pub gamma: f64,
    #[serde(default)]
    pub margin_scale: MarginScale,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub bonferroni: Bonferroni,
    pub rng_seed: u64,
    #[serde(default)]
    pub attack: AttackConfig,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            num_samples: 100,
            gamma: 1.0,
            margin_scale: MarginScale::Std,
            method: Method::Ibp,
            bonferroni: Bonferroni::Off,
            rng_seed: 0,
            attack: AttackConfig::default(),
        }
    }
}

impl CertifyConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("weight margin gamma = {} must be finite and >= 0", self.gamma)));
        }
        if let Bonferroni::On { depth } = self.bonferroni {
            if depth < 2 || !depth.is_multiple_of(2) {
                return Err(Error::invalid(format!("Bonferroni depth must be an even integer >= 2, got {depth}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Psafe,
    Dsafe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CertValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl CertValue {
    /// The scalar value; panics on a vector.
    pub fn scalar(&self) -> f64 {
        match self {
            CertValue::Scalar(v) => *v,
            CertValue::Vector(_) => panic!("certificate holds a per-class vector"),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            CertValue::Scalar(v) => std::slice::from_ref(v),
            CertValue::Vector(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub property: Property,
    pub direction: Direction,
    pub value: CertValue,
    /// Posterior mass of the whole box family that was examined.
    pub covered_mass: f64,
    /// Boxes sampled.
    pub boxes_used: usize,
    /// Boxes that entered the bound (certified safe/unsafe, or all examined
    /// boxes for decision bounds).
    pub boxes_kept: usize,
    pub wall_time_ms: f64,
    pub config: CertifyConfig,
}

/// What the decision bounds are taken over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    /// Softmax probability of `class`.
    Classification { class: usize },
    /// Raw output `index`; the output range `[floor, ceiling]` must be given
    /// for whichever side is bounded.
    Regression {
        index: usize,
        floor: Option<f64>,
        ceiling: Option<f64>,
    },
}

/// The boxes of one certification run and the subset used for the bound.
struct Family<T> {
    boxes: Vec<WeightBox<T>>,
    members: Vec<usize>,
}

/// Weight boxes for a run. Gaussian posteriors draw sample `i` from stream
/// `i` of a generator seeded with `rng_seed`; sample posteriors enumerate
/// their first `num_samples` atoms in stored order with zero margin.
pub fn sample_boxes<T: Scalar>(posterior: &Posterior<T>, cfg: &CertifyConfig) -> Result<Vec<WeightBox<T>>> {
    cfg.validate()?;
    match posterior {
        Posterior::Samples(s) => {
            let m = cfg.num_samples.min(s.samples.len());
            Ok(s.samples[..m].iter().map(|w| WeightBox::point(w.as_slice())).collect())
        }
        Posterior::Gaussian(g) => (0..cfg.num_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
                rng.set_stream(i as u64);
                let w = g.sample_with(&mut rng);
                posterior.make_box(&w, T::lit(cfg.gamma), cfg.margin_scale)
            })
            .collect(),
    }
}

fn family<T: Scalar>(posterior: &Posterior<T>, cfg: &CertifyConfig) -> Result<Family<T>> {
    let boxes = sample_boxes(posterior, cfg)?;
    let members = match cfg.bonferroni {
        Bonferroni::Off => disjointify(&boxes),
        Bonferroni::On { .. } => (0..boxes.len()).collect(),
    };
    Ok(Family { boxes, members })
}

/// Posterior mass of the union of `picked` boxes: exact sum for a disjoint
/// family, Bonferroni lower bound otherwise.
fn union_mass<T: Scalar>(
    posterior: &Posterior<T>,
    fam: &Family<T>,
    picked: &[usize],
    cfg: &CertifyConfig,
) -> Result<f64> {
    let mass = match cfg.bonferroni {
        Bonferroni::Off => picked.iter().map(|&i| posterior.box_mass(&fam.boxes[i]).as_f64()).sum(),
        Bonferroni::On { depth } => {
            let chosen: Vec<WeightBox<T>> = picked.iter().map(|&i| fam.boxes[i].clone()).collect();
            bonferroni_bounds(&chosen, posterior, depth, 1)?.0.as_f64()
        }
    };
    Ok(mass.clamp(0.0, 1.0))
}

fn check_inputs<T: Scalar>(net: &Network, posterior: &Posterior<T>, t: &InputBox<T>) -> Result<()> {
    net.check_params(posterior.num_params(), "posterior")?;
    net.check_input(t.dim(), "input box")
}

fn check_spec<T: Scalar>(net: &Network, s: &OutputSpec<T>) -> Result<()> {
    if s.output_dim() != net.output_dim() {
        return Err(Error::dims("output spec", net.output_dim(), s.output_dim()));
    }
    Ok(())
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Lower bound on the posterior probability that every `x` in `t` maps into `s`.
pub fn psafe_lower<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    s: &OutputSpec<T>,
    cfg: &CertifyConfig,
) -> Result<Certificate> {
    let start = Instant::now();
    check_inputs(net, posterior, t)?;
    check_spec(net, s)?;
    let fam = family(posterior, cfg)?;
    let safe: Vec<bool> = fam
        .members
        .par_iter()
        .map(|&i| {
            let (lo, hi) = propagate(cfg.method, net, t, &fam.boxes[i])?;
            s.contains(&lo, &hi)
        })
        .collect::<Result<_>>()?;
    let kept: Vec<usize> = fam.members.iter().zip(&safe).filter(|(_, &ok)| ok).map(|(&i, _)| i).collect();
    let value = union_mass(posterior, &fam, &kept, cfg)?;
    let covered_mass = union_mass(posterior, &fam, &fam.members, cfg)?;
    log::debug!("psafe lower: {} of {} boxes certified safe, value {value}", kept.len(), fam.boxes.len());
    Ok(Certificate {
        property: Property::Psafe,
        direction: Direction::Lower,
        value: CertValue::Scalar((value + 0.0).clamp(0.0, 1.0)),
        covered_mass,
        boxes_used: fam.boxes.len(),
        boxes_kept: kept.len(),
        wall_time_ms: elapsed_ms(start),
        config: cfg.clone(),
    })
}

/// Upper bound on `P_safe`: one minus the mass of boxes certified to
/// violate `s` at an adversarial input found by attacking the box center.
pub fn psafe_upper<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    s: &OutputSpec<T>,
    cfg: &CertifyConfig,
) -> Result<Certificate> {
    let start = Instant::now();
    check_inputs(net, posterior, t)?;
    check_spec(net, s)?;
    let fam = family(posterior, cfg)?;
    let objective = Objective::SpecViolation(s.clone());
    let unsafe_flags: Vec<bool> = fam
        .members
        .par_iter()
        .map(|&i| {
            let b = &fam.boxes[i];
            let attack = AttackConfig {
                seed: cfg.attack.seed.wrapping_add(i as u64),
                ..cfg.attack.clone()
            };
            let found = pgd(net, &WeightVector(b.center()), t, &objective, &attack)?;
            // a box whose center satisfies s at x_adv cannot be excluded
            if !(found.value > T::zero()) {
                return Ok(false);
            }
            let (lo, hi) = propagate(cfg.method, net, &InputBox::point(&found.x)?, b)?;
            s.excludes(&lo, &hi)
        })
        .collect::<Result<_>>()?;
    let kept: Vec<usize> = fam
        .members
        .iter()
        .zip(&unsafe_flags)
        .filter(|(_, &bad)| bad)
        .map(|(&i, _)| i)
        .collect();
    let value = 1.0 - union_mass(posterior, &fam, &kept, cfg)?;
    let covered_mass = union_mass(posterior, &fam, &fam.members, cfg)?;
    log::debug!("psafe upper: {} of {} boxes certified unsafe, value {value}", kept.len(), fam.boxes.len());
    Ok(Certificate {
        property: Property::Psafe,
        direction: Direction::Upper,
        value: CertValue::Scalar((value + 0.0).clamp(0.0, 1.0)),
        covered_mass,
        boxes_used: fam.boxes.len(),
        boxes_kept: kept.len(),
        wall_time_ms: elapsed_ms(start),
        config: cfg.clone(),
    })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax_extreme<T: Scalar>(own: &[T], others: &[T], c: usize) -> T {
    assert!(c < own.len() && own.len() == others.len(), "class index or logit bound length mismatch");
    let terms: Vec<f64> = (0..own.len())
        .map(|l| if l == c { own[c].as_f64() } else { others[l].as_f64() })
        .collect();
    T::lit((own[c].as_f64() - log_sum_exp(&terms)).exp().clamp(0.0, 1.0))
}

/// Smallest softmax probability of class `c` over the logit box `[yl, yu]`.
pub fn output_worst<T: Scalar>(yl: &[T], yu: &[T], c: usize) -> T {
    softmax_extreme(yl, yu, c)
}

/// Largest softmax probability of class `c` over the logit box `[yl, yu]`.
pub fn output_best<T: Scalar>(yl: &[T], yu: &[T], c: usize) -> T {
    softmax_extreme(yu, yl, c)
}

/// Per-box output bounds of the examined family.
struct Propagated<T> {
    fam: Family<T>,
    outputs: Vec<(Vec<T>, Vec<T>)>,
}

fn propagate_family<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    cfg: &CertifyConfig,
) -> Result<Propagated<T>> {
    check_inputs(net, posterior, t)?;
    let fam = family(posterior, cfg)?;
    let outputs = fam
        .members
        .par_iter()
        .map(|&i| propagate(cfg.method, net, t, &fam.boxes[i]))
        .collect::<Result<_>>()?;
    Ok(Propagated { fam, outputs })
}

/// Lower bound on `E[g(w)]` given `g >= psi_i` on box `i` and `g >= floor`
/// everywhere.
fn expectation_lower<T: Scalar>(
    posterior: &Posterior<T>,
    p: &Propagated<T>,
    psi: &[f64],
    floor: f64,
    cfg: &CertifyConfig,
) -> Result<f64> {
    match cfg.bonferroni {
        Bonferroni::Off => {
            let mut acc = 0.0;
            let mut total = 0.0;
            for (&i, &v) in p.fam.members.iter().zip(psi) {
                let m = posterior.box_mass(&p.fam.boxes[i]).as_f64();
                acc += m * v;
                total += m;
            }
            Ok(acc + floor * (1.0 - total.min(1.0)))
        }
        Bonferroni::On { depth } => {
            let boxes: Vec<WeightBox<T>> = p.fam.members.iter().map(|&i| p.fam.boxes[i].clone()).collect();
            let shifted: Vec<T> = psi.iter().map(|&v| T::lit((v - floor).max(0.0))).collect();
            Ok(floor + bonferroni_weighted_lower(&boxes, &shifted, posterior, depth)?.as_f64())
        }
    }
}

fn class_bounds<T: Scalar>(
    posterior: &Posterior<T>,
    p: &Propagated<T>,
    class: usize,
    cfg: &CertifyConfig,
) -> Result<(f64, f64)> {
    let worst: Vec<f64> = p.outputs.iter().map(|(l, u)| output_worst(l, u, class).as_f64()).collect();
    // upper bound of g is 1 - lower bound of 1 - g
    let best_gap: Vec<f64> = p.outputs.iter().map(|(l, u)| 1.0 - output_best(l, u, class).as_f64()).collect();
    let lower = expectation_lower(posterior, p, &worst, 0.0, cfg)?;
    let upper = 1.0 - expectation_lower(posterior, p, &best_gap, 0.0, cfg)?;
    Ok((lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0)))
}

fn dsafe<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    task: Task,
    cfg: &CertifyConfig,
    direction: Direction,
) -> Result<Certificate> {
    let start = Instant::now();
    let n_out = net.output_dim();
    let (index, bound) = match task {
        Task::Classification { class } => (class, None),
        Task::Regression { index, floor, ceiling } => {
            let b = match direction {
                Direction::Lower => floor.ok_or(Error::MissingOutputBound("floor"))?,
                Direction::Upper => ceiling.ok_or(Error::MissingOutputBound("ceiling"))?,
            };
            if !b.is_finite() {
                return Err(Error::NonFinite("regression output bound".into()));
            }
            (index, Some(b))
        }
    };
    if index >= n_out {
        return Err(Error::invalid(format!("output index {index} out of range for {n_out} outputs")));
    }
    let p = propagate_family(net, posterior, t, cfg)?;
    let value = match bound {
        None => {
            let (lo, hi) = class_bounds(posterior, &p, index, cfg)?;
            if direction == Direction::Lower {
                lo
            } else {
                hi
            }
        }
        Some(b) if direction == Direction::Lower => {
            let psi: Vec<f64> = p.outputs.iter().map(|(l, _)| l[index].as_f64()).collect();
            expectation_lower(posterior, &p, &psi, b, cfg)?
        }
        Some(b) => {
            // E[g] <= b - E-lower of (b - g)
            let psi: Vec<f64> = p.outputs.iter().map(|(_, u)| -u[index].as_f64()).collect();
            -expectation_lower(posterior, &p, &psi, -b, cfg)?
        }
    };
    let covered_mass = union_mass(posterior, &p.fam, &p.fam.members, cfg)?;
    Ok(Certificate {
        property: Property::Dsafe,
        direction,
        value: CertValue::Scalar(value),
        covered_mass,
        boxes_used: p.fam.boxes.len(),
        boxes_kept: p.fam.members.len(),
        wall_time_ms: elapsed_ms(start),
        config: cfg.clone(),
    })
}

/// Lower bound on `min_{x in t}` of the posterior-predictive value.
pub fn dsafe_lower<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    task: Task,
    cfg: &CertifyConfig,
) -> Result<Certificate> {
    dsafe(net, posterior, t, task, cfg, Direction::Lower)
}

/// Upper bound on `max_{x in t}` of the posterior-predictive value.
pub fn dsafe_upper<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    task: Task,
    cfg: &CertifyConfig,
) -> Result<Certificate> {
    dsafe(net, posterior, t, task, cfg, Direction::Upper)
}

/// Per-class predictive-softmax bounds from a single propagation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub covered_mass: f64,
}

pub fn dsafe_all_classes<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    cfg: &CertifyConfig,
) -> Result<ClassBounds> {
    let p = propagate_family(net, posterior, t, cfg)?;
    let mut lower = Vec::with_capacity(net.output_dim());
    let mut upper = Vec::with_capacity(net.output_dim());
    for c in 0..net.output_dim() {
        let (lo, hi) = class_bounds(posterior, &p, c, cfg)?;
        lower.push(lo);
        upper.push(hi);
    }
    Ok(ClassBounds {
        lower,
        upper,
        covered_mass: union_mass(posterior, &p.fam, &p.fam.members, cfg)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionVerdict {
    #[serde(rename = "certified-robust")]
    Robust,
    #[serde(rename = "certified-wrong")]
    Wrong,
    #[serde(rename = "unknown")]
    Unknown,
}

/// Compares per-class bounds; ties are never decisive.
pub fn decision_verdict(bounds: &ClassBounds, true_class: usize) -> Result<DecisionVerdict> {
    let n = bounds.lower.len();
    if bounds.upper.len() != n {
        return Err(Error::dims("class upper bounds", n, bounds.upper.len()));
    }
    if true_class >= n {
        return Err(Error::invalid(format!("true class {true_class} out of range for {n} classes")));
    }
    let lc = bounds.lower[true_class];
    let max_other = (0..n)
        .filter(|&j| j != true_class)
        .map(|j| bounds.upper[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if lc > 0.5 || lc > max_other {
        return Ok(DecisionVerdict::Robust);
    }
    if (0..n).any(|j| j != true_class && bounds.lower[j] > bounds.upper[true_class]) {
        return Ok(DecisionVerdict::Wrong);
    }
    Ok(DecisionVerdict::Unknown)
}

pub fn decision_robust<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    true_class: usize,
    cfg: &CertifyConfig,
) -> Result<DecisionVerdict> {
    decision_verdict(&dsafe_all_classes(net, posterior, t, cfg)?, true_class)
}

/// True iff every class's predictive upper bound is below `tau`.
pub fn uncertainty_check<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    tau: f64,
    cfg: &CertifyConfig,
) -> Result<bool> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("uncertainty threshold {tau} must lie in (0, 1)")));
    }
    let b = dsafe_all_classes(net, posterior, t, cfg)?;
    Ok(b.upper.iter().all(|&u| u < tau))
}

/// Output bounds of one examined box and its posterior mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxOutput {
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

/// Per-box bounds on output `index` over a disjoint box family.
pub fn regression_box_outputs<T: Scalar>(
    net: &Network,
    posterior: &Posterior<T>,
    t: &InputBox<T>,
    index: usize,
    cfg: &CertifyConfig,
) -> Result<Vec<BoxOutput>> {
    if index >= net.output_dim() {
        return Err(Error::invalid(format!(
            "output index {index} out of range for {} outputs",
            net.output_dim()
        )));
    }
    let cfg = CertifyConfig {
        bonferroni: Bonferroni::Off,
        ..cfg.clone()
    };
    let p = propagate_family(net, posterior, t, &cfg)?;
    Ok(p.fam
        .members
        .iter()
        .zip(&p.outputs)
        .map(|(&i, (l, u))| BoxOutput {
            lower: l[index].as_f64(),
            upper: u[index].as_f64(),
            mass: posterior.box_mass(&p.fam.boxes[i]).as_f64(),
        })
        .collect())
}

/// Bounds on the median of the posterior-predictive output from a disjoint
/// box family. Uncovered mass is placed adversarially at `-inf` (lower)
/// or `+inf` (upper).
pub fn median_bounds(outputs: &[BoxOutput]) -> Result<(f64, f64)> {
    if outputs.iter().any(|o| !(o.lower <= o.upper) || !(o.mass >= 0.0)) {
        return Err(Error::invalid("box outputs need lower <= upper and non-negative mass"));
    }
    let captured: f64 = outputs.iter().map(|o| o.mass).sum();
    if captured <= 0.5 {
        return Err(Error::MedianUnbounded { captured });
    }
    let eta = (1.0 - captured).max(0.0);
    let crossing = |order: &[&BoxOutput]| {
        let mut cum = eta;
        for o in order {
            cum += o.mass;
            if cum >= 0.5 {
                return Some(**o);
            }
        }
        None
    };
    let mut by_lower: Vec<&BoxOutput> = outputs.iter().collect();
    by_lower.sort_by(|a, b| a.lower.total_cmp(&b.lower));
    let mut by_upper: Vec<&BoxOutput> = outputs.iter().collect();
    by_upper.sort_by(|a, b| b.upper.total_cmp(&a.upper));
    let lo = crossing(&by_lower).map(|o| o.lower);
    let hi = crossing(&by_upper).map(|o| o.upper);
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(Error::MedianUnbounded { captured }),
    }
}

/// The class whose predictive lower bound clears `K_i / sum K`, if any.
pub fn k0_decision_check(lower: &[f64], penalties: &[f64]) -> Result<Option<usize>> {
    if lower.len() != penalties.len() {
        return Err(Error::dims("penalty vector", lower.len(), penalties.len()));
    }
    if penalties.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
        return Err(Error::invalid("penalties must be positive and finite"));
    }
    let total: f64 = penalties.iter().sum();
    let winners: Vec<usize> = (0..lower.len()).filter(|&i| lower[i] >= penalties[i] / total).collect();
    match winners.len() {
        0 => Ok(None),
        1 => Ok(Some(winners[0])),
        _ => Err(Error::InconsistentPenalties(winners)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{forward, softmax, Activation, LayerSpec};
    use crate::posterior::{GaussianPosterior, SamplePosterior};
    use rand::Rng;

    /// logits `[0.25, x]` for a scalar input `x`.
    fn threshold_net() -> Network {
        Network::new(vec![LayerSpec::new(2, 1, Activation::Identity)]).unwrap()
    }

    fn atoms(ws: Vec<Vec<f64>>) -> Posterior<f64> {
        SamplePosterior::uniform(ws.into_iter().map(WeightVector).collect()).unwrap().into()
    }

    fn cfg(n: usize) -> CertifyConfig {
        CertifyConfig {
            num_samples: n,
            gamma: 0.0,
            ..CertifyConfig::default()
        }
    }

    #[test]
    fn single_safe_atom() {
        let post = atoms(vec![vec![0.0, 1.0, 0.25, 0.0]]);
        let t = InputBox::new(vec![-0.1], vec![0.1]).unwrap();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let c = psafe_lower(&threshold_net(), &post, &t, &s, &cfg(10)).unwrap();
        assert_eq!(c.value.scalar(), 1.0);
        assert_eq!(c.boxes_used, 1);
        let c = psafe_upper(&threshold_net(), &post, &t, &s, &cfg(10)).unwrap();
        assert_eq!(c.value.scalar(), 1.0);
    }

    #[test]
    fn one_safe_one_unsafe_atom() {
        // second atom: logits [0.25, x + 1], always class 1
        let post = atoms(vec![vec![0.0, 1.0, 0.25, 0.0], vec![0.0, 1.0, 0.25, 1.0]]);
        let t = InputBox::new(vec![-0.1], vec![0.1]).unwrap();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let net = threshold_net();
        assert!((psafe_lower(&net, &post, &t, &s, &cfg(10)).unwrap().value.scalar() - 0.5).abs() < 1e-15);
        assert!((psafe_upper(&net, &post, &t, &s, &cfg(10)).unwrap().value.scalar() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn attack_exposes_violation_inside_box() {
        let post = atoms(vec![vec![0.0, 1.0, 0.25, 0.0]]);
        let t = InputBox::new(vec![-0.4], vec![0.4]).unwrap();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let net = threshold_net();
        assert_eq!(psafe_upper(&net, &post, &t, &s, &cfg(1)).unwrap().value.scalar(), 0.0);
        assert_eq!(psafe_lower(&net, &post, &t, &s, &cfg(1)).unwrap().value.scalar(), 0.0);
    }

    #[test]
    fn output_extremes() {
        assert_eq!(output_worst(&[0.0, 0.0], &[0.0, 0.0], 0), 0.5);
        assert_eq!(output_best(&[0.0, 0.0], &[0.0, 0.0], 0), 0.5);
        let e = std::f64::consts::E;
        assert!((output_worst(&[1.0, -5.0], &[3.0, 0.0], 0) - e / (e + 1.0)).abs() < 1e-12);
        assert!((output_best(&[-2.0, 0.0], &[1.0, 4.0], 0) - e / (e + 1.0)).abs() < 1e-12);
        // huge logits stay finite
        assert!((output_worst(&[1000.0f64, 0.0], &[1000.0, 0.0], 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn output_extremes_sandwich_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(2..6);
            let yl: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let yu: Vec<f64> = yl.iter().map(|v| v + rng.random_range(0.0..3.0)).collect();
            let c = rng.random_range(0..n);
            let (lo, hi) = (output_worst(&yl, &yu, c), output_best(&yl, &yu, c));
            assert!(lo <= hi);
            for _ in 0..1000 {
                let y: Vec<f64> = yl.iter().zip(&yu).map(|(&l, &u)| rng.random_range(l..=u)).collect();
                let p = softmax(&y).unwrap()[c];
                assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn empty_family_gives_codomain_bounds() {
        let post = atoms(vec![vec![0.0, 1.0, 0.25, 0.0]]);
        let t = InputBox::point(&[0.0]).unwrap();
        let task = Task::Classification { class: 0 };
        let net = threshold_net();
        assert_eq!(dsafe_lower(&net, &post, &t, task, &cfg(0)).unwrap().value.scalar(), 0.0);
        assert_eq!(dsafe_upper(&net, &post, &t, task, &cfg(0)).unwrap().value.scalar(), 1.0);
    }

    #[test]
    fn point_atom_decision_is_exact() {
        let w = vec![0.3, -0.8, 0.25, 0.1];
        let post = atoms(vec![w.clone()]);
        let net = threshold_net();
        let x = [0.4];
        let t = InputBox::point(&x).unwrap();
        let p = softmax(&forward(&net, &WeightVector(w), &x).unwrap()).unwrap();
        for (c, &pc) in p.iter().enumerate() {
            let task = Task::Classification { class: c };
            let lo = dsafe_lower(&net, &post, &t, task, &cfg(1)).unwrap().value.scalar();
            let hi = dsafe_upper(&net, &post, &t, task, &cfg(1)).unwrap().value.scalar();
            assert!(lo <= pc && pc <= hi);
            assert!(hi - lo < 1e-9);
        }
    }

    #[test]
    fn regression_needs_output_range() {
        let post = atoms(vec![vec![0.0, 1.0, 0.25, 0.0]]);
        let t = InputBox::point(&[0.0]).unwrap();
        let net = threshold_net();
        let task = Task::Regression { index: 1, floor: None, ceiling: Some(2.0) };
        assert!(matches!(
            dsafe_lower(&net, &post, &t, task, &cfg(1)),
            Err(Error::MissingOutputBound("floor"))
        ));
        let c = dsafe_upper(&net, &post, &t, task, &cfg(1)).unwrap();
        assert!(c.value.scalar().abs() < 1e-9);
    }

    #[test]
    fn gaussian_bounds_are_ordered_and_seeded() {
        let net = Network::mlp(&[2, 5, 3], Activation::Relu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mean: Vec<f64> = (0..net.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let post: Posterior<f64> = GaussianPosterior::new(mean, vec![0.01; net.num_params()]).unwrap().into();
        let t = InputBox::new(vec![0.0, 0.0], vec![0.05, 0.05]).unwrap();
        let s = OutputSpec::argmax(0, 3).unwrap();
        for bonferroni in [Bonferroni::Off, Bonferroni::On { depth: 2 }] {
            for method in [Method::Ibp, Method::Lbp] {
                let cfg = CertifyConfig { num_samples: 20, gamma: 0.5, method, bonferroni, ..CertifyConfig::default() };
                let lo = psafe_lower(&net, &post, &t, &s, &cfg).unwrap();
                let hi = psafe_upper(&net, &post, &t, &s, &cfg).unwrap();
                assert!(lo.value.scalar() <= hi.value.scalar());
                assert_eq!(lo, Certificate { wall_time_ms: lo.wall_time_ms, ..psafe_lower(&net, &post, &t, &s, &cfg).unwrap() });
                let b = dsafe_all_classes(&net, &post, &t, &cfg).unwrap();
                for c in 0..3 {
                    assert!((0.0..=1.0).contains(&b.lower[c]) && b.lower[c] <= b.upper[c] && b.upper[c] <= 1.0);
                }
            }
        }
    }

    #[test]
    fn rejects_odd_bonferroni_depth() {
        let post = atoms(vec![vec![0.0, 1.0, 0.25, 0.0]]);
        let t = InputBox::point(&[0.0]).unwrap();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let cfg = CertifyConfig { bonferroni: Bonferroni::On { depth: 3 }, ..cfg(1) };
        assert!(psafe_lower(&threshold_net(), &post, &t, &s, &cfg).is_err());
    }

    #[test]
    fn decision_rules() {
        let b = ClassBounds { lower: vec![0.81, 0.05], upper: vec![0.95, 0.19], covered_mass: 1.0 };
        assert_eq!(decision_verdict(&b, 0).unwrap(), DecisionVerdict::Robust);
        assert_eq!(decision_verdict(&b, 1).unwrap(), DecisionVerdict::Wrong);
        let b = ClassBounds { lower: vec![0.4, 0.4], upper: vec![0.6, 0.6], covered_mass: 1.0 };
        assert_eq!(decision_verdict(&b, 0).unwrap(), DecisionVerdict::Unknown);
        let b = ClassBounds { lower: vec![0.3, 0.2], upper: vec![0.5, 0.3], covered_mass: 1.0 };
        assert_eq!(decision_verdict(&b, 0).unwrap(), DecisionVerdict::Unknown);
    }

    #[test]
    fn uniform_prediction_is_uncertain() {
        let net = Network::new(vec![LayerSpec::new(3, 2, Activation::Identity)]).unwrap();
        let post = atoms(vec![vec![0.0; net.num_params()]]);
        let t = InputBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(uncertainty_check(&net, &post, &t, 0.4, &cfg(1)).unwrap());
        assert!(!uncertainty_check(&net, &post, &t, 0.3, &cfg(1)).unwrap());
        assert!(uncertainty_check(&net, &post, &t, 0.55, &cfg(1)).unwrap());
        assert!(uncertainty_check(&net, &post, &t, 1.0, &cfg(1)).is_err());
    }

    #[test]
    fn median_rules() {
        let o = |lower, upper, mass| BoxOutput { lower, upper, mass };
        let outs = [o(3.0, 3.5, 0.25), o(1.0, 1.5, 0.25), o(2.0, 2.5, 0.5)];
        assert_eq!(median_bounds(&outs).unwrap(), (2.0, 2.5));
        assert_eq!(median_bounds(&[o(1.0, 4.0, 1.0)]).unwrap(), (1.0, 4.0));
        assert!(matches!(median_bounds(&[o(1.0, 4.0, 0.5)]), Err(Error::MedianUnbounded { .. })));
        // uncovered mass 0.3 pushes the lower crossing one box further
        let outs = [o(1.0, 1.0, 0.3), o(2.0, 2.0, 0.4)];
        assert_eq!(median_bounds(&outs).unwrap(), (1.0, 2.0));
    }

    #[test]
    fn k0_thresholds() {
        assert_eq!(k0_decision_check(&[0.6, 0.1], &[1.0, 1.0]).unwrap(), Some(0));
        assert_eq!(k0_decision_check(&[0.3, 0.1], &[1.0, 3.0]).unwrap(), Some(0));
        assert_eq!(k0_decision_check(&[0.2, 0.1], &[1.0, 1.0]).unwrap(), None);
        assert!(matches!(k0_decision_check(&[0.3, 0.8], &[1.0, 3.0]), Err(Error::InconsistentPenalties(_))));
        assert!(k0_decision_check(&[0.3], &[1.0, 3.0]).is_err());
    }
}
