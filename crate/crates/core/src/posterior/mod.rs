//! Approximate posteriors over the flat weight vector, weight boxes, and
//! exact posterior mass of axis-aligned boxes.

mod bonferroni;
mod boxes;
mod gaussian;

pub use bonferroni::{bonferroni_bounds, bonferroni_weighted_lower, intersection_sums};
pub use boxes::{disjointify, WeightBox};
pub use gaussian::{interval_mass, GaussianPosterior};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::WeightVector;
use crate::scalar::Scalar;

/// Weighted set of weight vectors, e.g. the output of an HMC chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePosterior<T> {
    pub samples: Vec<WeightVector<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> SamplePosterior<T> {
    pub fn new(samples: Vec<WeightVector<T>>, weights: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("sample posterior needs at least one sample"));
        }
        if weights.len() != samples.len() {
            return Err(Error::dims("sample weights", samples.len(), weights.len()));
        }
        let n = samples[0].len();
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != n) {
            return Err(Error::dims(format!("sample {i}"), n, s.len()));
        }
        if weights.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
            return Err(Error::invalid("sample weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().map(|p| p.as_f64()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("sample weights sum to {total}, not 1")));
        }
        Ok(SamplePosterior { samples, weights })
    }

    pub fn uniform(samples: Vec<WeightVector<T>>) -> Result<Self> {
        let m = samples.len().max(1);
        let p = T::one() / T::from_usize(m).expect("sample count fits scalar");
        let weights = vec![p; samples.len()];
        SamplePosterior::new(samples, weights)
    }

    #[inline]
    pub fn num_params(&self) -> usize {
        self.samples[0].len()
    }

    /// Total weight of atoms inside the closed box.
    pub fn box_mass(&self, b: &WeightBox<T>) -> T {
        let mut mass = T::zero();
        for (s, &p) in self.samples.iter().zip(&self.weights) {
            if b.contains(s.as_slice()) {
                mass += p;
            }
        }
        mass.min(T::one())
    }

    fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::lit(rng.random::<f64>());
        let mut acc = T::zero();
        for (i, &p) in self.weights.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// How the weight-margin `gamma` turns into a box half-width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginScale {
    /// `gamma * sqrt(variance)`.
    #[default]
    Std,
    /// `gamma * variance`.
    Var,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Posterior<T> {
    Gaussian(GaussianPosterior<T>),
    Samples(SamplePosterior<T>),
}

impl<T: Scalar> Posterior<T> {
    pub fn num_params(&self) -> usize {
        match self {
            Posterior::Gaussian(g) => g.num_params(),
            Posterior::Samples(s) => s.num_params(),
        }
    }

    /// Draws one weight vector from a generator derived from `seed`.
    pub fn sample(&self, seed: u64) -> WeightVector<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightVector<T> {
        match self {
            Posterior::Gaussian(g) => g.sample_with(rng),
            Posterior::Samples(s) => s.samples[s.draw_index(rng)].clone(),
        }
    }

    /// Posterior mean; for sample posteriors the weighted average of atoms.
    pub fn mean(&self) -> WeightVector<T> {
        match self {
            Posterior::Gaussian(g) => WeightVector(g.mean.clone()),
            Posterior::Samples(s) => {
                let mut m = vec![T::zero(); s.num_params()];
                for (w, &p) in s.samples.iter().zip(&s.weights) {
                    for (acc, &v) in m.iter_mut().zip(w.as_slice()) {
                        *acc += p * v;
                    }
                }
                WeightVector(m)
            }
        }
    }

    /// Box `[w - v, w + v]` around a sampled weight vector.
    ///
    /// Sample posteriors always use a zero margin so each box holds exactly
    /// one atom.
    pub fn make_box(&self, w: &WeightVector<T>, gamma: T, scale: MarginScale) -> Result<WeightBox<T>> {
        if !(gamma >= T::zero()) {
            return Err(Error::invalid(format!("weight margin {gamma} is negative")));
        }
        if w.len() != self.num_params() {
            return Err(Error::dims("weight vector", self.num_params(), w.len()));
        }
        match self {
            Posterior::Samples(_) => Ok(WeightBox::point(w.as_slice())),
            Posterior::Gaussian(g) => {
                let mut lower = Vec::with_capacity(w.len());
                let mut upper = Vec::with_capacity(w.len());
                for (&c, &var) in w.as_slice().iter().zip(&g.variance) {
                    let hw = match scale {
                        MarginScale::Std => gamma * var.sqrt(),
                        MarginScale::Var => gamma * var,
                    };
                    lower.push(c - hw);
                    upper.push(c + hw);
                }
                Ok(WeightBox { lower, upper })
            }
        }
    }

    /// Posterior probability of the box.
    pub fn box_mass(&self, b: &WeightBox<T>) -> T {
        match self {
            Posterior::Gaussian(g) => g.box_mass(b),
            Posterior::Samples(s) => s.box_mass(b),
        }
    }
}

impl<T> From<GaussianPosterior<T>> for Posterior<T> {
    fn from(g: GaussianPosterior<T>) -> Self {
        Posterior::Gaussian(g)
    }
}

impl<T> From<SamplePosterior<T>> for Posterior<T> {
    fn from(s: SamplePosterior<T>) -> Self {
        Posterior::Samples(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(mean: Vec<f64>, variance: Vec<f64>) -> Posterior<f64> {
        GaussianPosterior::new(mean, variance).unwrap().into()
    }

    #[test]
    fn degenerate_gaussian_sample_is_mean() {
        let m = vec![0.3, -1.2, 4.0];
        let p = gauss(m.clone(), vec![1e-20; 3]);
        let w = p.sample(11);
        for (a, b) in w.as_slice().iter().zip(&m) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn single_atom_always_returned() {
        let atom = WeightVector(vec![1.0, 2.0]);
        let p: Posterior<f64> = SamplePosterior::uniform(vec![atom.clone()]).unwrap().into();
        for seed in 0..20 {
            assert_eq!(p.sample(seed), atom);
        }
    }

    #[test]
    fn standard_normal_sample_mean() {
        let p = gauss(vec![0.0], vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| p.sample_with(&mut rng).0[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn weighted_atoms_drawn_by_weight() {
        let atoms = vec![WeightVector(vec![0.0]), WeightVector(vec![1.0])];
        let p: Posterior<f64> = SamplePosterior::new(atoms, vec![0.25, 0.75]).unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ones = (0..20_000).filter(|_| p.sample_with(&mut rng).0[0] == 1.0).count();
        assert!((ones as f64 / 20_000.0 - 0.75).abs() < 0.02);
    }

    #[test]
    fn make_box_conventions() {
        let w = WeightVector(vec![1.0]);
        let p = gauss(vec![0.0], vec![4.0]);
        let b = p.make_box(&w, 0.0, MarginScale::Std).unwrap();
        assert_eq!((b.lower.clone(), b.upper.clone()), (vec![1.0], vec![1.0]));
        let b = p.make_box(&w, 2.0, MarginScale::Std).unwrap();
        assert_eq!((b.lower, b.upper), (vec![-3.0], vec![5.0]));
        let b = p.make_box(&w, 2.0, MarginScale::Var).unwrap();
        assert_eq!((b.lower, b.upper), (vec![-7.0], vec![9.0]));
        assert!(p.make_box(&w, -1.0, MarginScale::Std).is_err());

        let s: Posterior<f64> = SamplePosterior::uniform(vec![w.clone()]).unwrap().into();
        let b = s.make_box(&w, 5.0, MarginScale::Std).unwrap();
        assert_eq!((b.lower, b.upper), (vec![1.0], vec![1.0]));
    }

    #[test]
    fn sample_posterior_validation() {
        let a = WeightVector(vec![0.0]);
        assert!(SamplePosterior::new(vec![a.clone()], vec![0.5]).is_err());
        assert!(SamplePosterior::<f64>::new(vec![], vec![]).is_err());
        assert!(SamplePosterior::new(vec![a.clone(), WeightVector(vec![1.0, 2.0])], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn atom_masses_sum_exactly() {
        let atoms: Vec<_> = (0..8).map(|i| WeightVector(vec![i as f64, -(i as f64)])).collect();
        let weights = vec![0.125; 8];
        let p: Posterior<f64> = SamplePosterior::new(atoms.clone(), weights).unwrap().into();
        let total: f64 = atoms
            .iter()
            .map(|a| p.box_mass(&p.make_box(a, 0.0, MarginScale::Std).unwrap()))
            .sum();
        assert_eq!(total, 1.0);
    }
}
