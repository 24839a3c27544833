//! Input regions `T` (boxes) and safe output sets `S` (polytopes `C y + d >= 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned input box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBox<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> InputBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_box(&lower, &upper, "input box")?;
        Ok(InputBox { lower, upper })
    }

    /// Degenerate box `[x, x]`.
    pub fn point(x: &[T]) -> Result<Self> {
        InputBox::new(x.to_vec(), x.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) * half)
            .collect()
    }

    pub fn contains_point(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| l <= v && v <= u)
    }

    /// Clamps `x` into the box in place.
    pub fn project(&self, x: &mut [T]) {
        for (v, (&l, &u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(l).min(u);
        }
    }

    /// True if `self` is a subset of `other`.
    pub fn is_subset_of(&self, other: &InputBox<T>) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| other.lower[i] <= self.lower[i] && self.upper[i] <= other.upper[i])
    }
}

pub(crate) fn check_box<T: Scalar>(lower: &[T], upper: &[T], what: &str) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::dims(format!("{what} upper"), lower.len(), upper.len()));
    }
    for (i, (&l, &u)) in lower.iter().zip(upper).enumerate() {
        if !l.is_finite() || !u.is_finite() {
            return Err(Error::NonFinite(format!("{what} dimension {i}")));
        }
        if l > u {
            return Err(Error::invalid(format!(
                "{what} dimension {i}: lower {l} exceeds upper {u}"
            )));
        }
    }
    Ok(())
}

/// Perturbation radius: one value for every dimension or one per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilon<T> {
    Uniform(T),
    PerDim(Vec<T>),
}

impl<T: Scalar> Epsilon<T> {
    pub fn at(&self, i: usize) -> T {
        match self {
            Epsilon::Uniform(e) => *e,
            Epsilon::PerDim(v) => v[i],
        }
    }

    /// Multiplies every entry by `s`; the radius search scales a base shape.
    pub fn scaled(&self, s: T) -> Self {
        match self {
            Epsilon::Uniform(e) => Epsilon::Uniform(*e * s),
            Epsilon::PerDim(v) => Epsilon::PerDim(v.iter().map(|&e| e * s).collect()),
        }
    }
}

impl<T> From<T> for Epsilon<T> {
    fn from(e: T) -> Self {
        Epsilon::Uniform(e)
    }
}

/// Per-dimension feasible range inputs are clipped to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clip<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> Clip<T> {
    pub fn uniform(lo: T, hi: T, dim: usize) -> Self {
        Clip {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }
}

/// `l_inf` ball around `x`, optionally intersected with a clip range.
pub fn linf_ball<T: Scalar>(x: &[T], eps: &Epsilon<T>, clip: Option<&Clip<T>>) -> Result<InputBox<T>> {
    let n = x.len();
    if let Epsilon::PerDim(v) = eps {
        if v.len() != n {
            return Err(Error::dims("epsilon", n, v.len()));
        }
    }
    if let Some(c) = clip {
        if c.lo.len() != n || c.hi.len() != n {
            return Err(Error::dims("clip range", n, c.lo.len().min(c.hi.len())));
        }
    }
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for (i, &xi) in x.iter().enumerate() {
        let e = eps.at(i);
        if e < T::zero() || e.is_nan() {
            return Err(Error::invalid(format!("epsilon[{i}] = {e} is negative")));
        }
        let (mut l, mut u) = (xi - e, xi + e);
        if let Some(c) = clip {
            l = l.max(c.lo[i]);
            u = u.min(c.hi[i]);
        }
        lower.push(l);
        upper.push(u);
    }
    InputBox::new(lower, upper)
}

/// Safe output set `{ y : C y + d >= 0 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec<T> {
    /// Constraint rows, each of length `output_dim`.
    pub c: Vec<Vec<T>>,
    pub d: Vec<T>,
}

impl<T: Scalar> OutputSpec<T> {
    pub fn new(c: Vec<Vec<T>>, d: Vec<T>) -> Result<Self> {
        if c.len() != d.len() {
            return Err(Error::dims("constraint offsets d", c.len(), d.len()));
        }
        if c.is_empty() {
            return Err(Error::invalid("output spec needs at least one constraint"));
        }
        let n = c[0].len();
        for (j, row) in c.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dims(format!("constraint row {j}"), n, row.len()));
            }
        }
        Ok(OutputSpec { c, d })
    }

    /// `y_true - y_j >= 0` for every `j != true_class`.
    pub fn argmax(true_class: usize, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid("argmax spec needs at least two classes"));
        }
        if true_class >= n_classes {
            return Err(Error::invalid(format!(
                "true class {true_class} out of range for {n_classes} classes"
            )));
        }
        let c = (0..n_classes)
            .filter(|&j| j != true_class)
            .map(|j| {
                let mut row = vec![T::zero(); n_classes];
                row[true_class] = T::one();
                row[j] = -T::one();
                row
            })
            .collect();
        OutputSpec::new(c, vec![T::zero(); n_classes - 1])
    }

    #[inline]
    pub fn num_constraints(&self) -> usize {
        self.c.len()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.c[0].len()
    }

    /// `C y + d`, one value per constraint row.
    pub fn row_values(&self, y: &[T]) -> Vec<T> {
        self.c
            .iter()
            .zip(&self.d)
            .map(|(row, &d)| row.iter().zip(y).map(|(&a, &v)| a * v).sum::<T>() + d)
            .collect()
    }

    pub fn satisfied_by(&self, y: &[T]) -> bool {
        self.row_values(y).into_iter().all(|v| v >= T::zero())
    }

    fn check_output_box(&self, yl: &[T], yu: &[T]) -> Result<()> {
        let n = self.output_dim();
        if yl.len() != n {
            return Err(Error::dims("output box lower", n, yl.len()));
        }
        if yu.len() != n {
            return Err(Error::dims("output box upper", n, yu.len()));
        }
        Ok(())
    }

    /// Minimum (`worst`) and maximum (`best`) of each constraint row over the box.
    fn row_extremes<'a>(&'a self, yl: &'a [T], yu: &'a [T]) -> impl Iterator<Item = (T, T)> + 'a {
        self.c.iter().zip(&self.d).map(move |(row, &d)| {
            let (mut worst, mut best) = (d, d);
            for (i, &a) in row.iter().enumerate() {
                if a >= T::zero() {
                    worst += a * yl[i];
                    best += a * yu[i];
                } else {
                    worst += a * yu[i];
                    best += a * yl[i];
                }
            }
            (worst, best)
        })
    }

    /// Every point of `[yl, yu]` satisfies every constraint.
    pub fn contains(&self, yl: &[T], yu: &[T]) -> Result<bool> {
        self.check_output_box(yl, yu)?;
        Ok(self.row_extremes(yl, yu).all(|(worst, _)| worst >= T::zero()))
    }

    /// Some single constraint is violated at every point of `[yl, yu]`.
    pub fn excludes(&self, yl: &[T], yu: &[T]) -> Result<bool> {
        self.check_output_box(yl, yu)?;
        Ok(self.row_extremes(yl, yu).any(|(_, best)| best < T::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_class() -> OutputSpec<f64> {
        OutputSpec::argmax(0, 2).unwrap()
    }

    #[test]
    fn ball_examples() {
        let b = linf_ball(&[0.5], &Epsilon::Uniform(0.0), None).unwrap();
        assert_eq!((b.lower, b.upper), (vec![0.5], vec![0.5]));
        let clip = Clip::uniform(0.0, 1.0, 1);
        let b = linf_ball(&[0.5f64], &0.1.into(), Some(&clip)).unwrap();
        assert!((b.lower[0] - 0.4).abs() < 1e-15 && (b.upper[0] - 0.6).abs() < 1e-15);
        let b = linf_ball(&[0.05f64], &0.1.into(), Some(&clip)).unwrap();
        assert_eq!(b.lower, vec![0.0]);
        assert!((b.upper[0] - 0.15).abs() < 1e-15);
        assert!(linf_ball(&[0.5], &Epsilon::Uniform(-0.1), None).is_err());
        assert!(linf_ball(&[0.5, 0.5], &Epsilon::PerDim(vec![0.1]), None).is_err());
    }

    #[test]
    fn argmax_rows() {
        let s = OutputSpec::<f64>::argmax(0, 2).unwrap();
        assert_eq!(s.c, vec![vec![1.0, -1.0]]);
        assert_eq!(s.d, vec![0.0]);
        let s = OutputSpec::<f64>::argmax(1, 2).unwrap();
        assert_eq!(s.c, vec![vec![-1.0, 1.0]]);
        let s = OutputSpec::<f64>::argmax(0, 3).unwrap();
        assert_eq!(s.c, vec![vec![1.0, -1.0, 0.0], vec![1.0, 0.0, -1.0]]);
        assert_eq!(s.d, vec![0.0, 0.0]);
        assert!(OutputSpec::<f64>::argmax(0, 1).is_err());
        assert!(OutputSpec::<f64>::argmax(3, 3).is_err());
    }

    #[test]
    fn contains_and_excludes_examples() {
        let s = two_class();
        assert!(s.contains(&[2.0, 0.0], &[3.0, 1.0]).unwrap());
        assert!(!s.contains(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
        assert!(s.contains(&[1.0, 0.5], &[1.0, 0.5]).unwrap());
        assert!(s.excludes(&[0.0, 2.0], &[1.0, 3.0]).unwrap());
        assert!(!s.excludes(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
        assert!(!s.excludes(&[2.0, 0.0], &[3.0, 1.0]).unwrap());
        assert!(s.contains(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn spec_shape_errors() {
        assert!(OutputSpec::new(vec![vec![1.0, 2.0]], vec![0.0, 1.0]).is_err());
        assert!(OutputSpec::new(vec![vec![1.0, 2.0], vec![1.0]], vec![0.0, 1.0]).is_err());
        assert!(InputBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(InputBox::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn fuzz_contains_excludes_against_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut seen = (0, 0);
        for _ in 0..300 {
            let n = rng.random_range(2..5);
            let rows = rng.random_range(1..4);
            let c: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let d: Vec<f64> = (0..rows).map(|_| rng.random_range(-0.5..0.5)).collect();
            let s = OutputSpec::new(c, d).unwrap();
            let yl: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let yu: Vec<f64> = yl.iter().map(|&l| l + rng.random_range(0.0..0.3)).collect();
            let inside = s.contains(&yl, &yu).unwrap();
            let outside = s.excludes(&yl, &yu).unwrap();
            assert!(!(inside && outside));
            if inside || outside {
                seen.0 += inside as usize;
                seen.1 += outside as usize;
                for _ in 0..10_000 {
                    let y: Vec<f64> = (0..n).map(|i| rng.random_range(yl[i]..=yu[i])).collect();
                    if inside {
                        assert!(s.satisfied_by(&y));
                    } else {
                        assert!(s.row_values(&y).iter().any(|&v| v < 0.0));
                    }
                }
            }
        }
        assert!(seen.0 > 0 && seen.1 > 0, "fuzz never exercised a branch: {seen:?}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ball_is_monotone(x in proptest::collection::vec(-1.0f64..1.0, 1..5), e1 in 0.0f64..0.5, extra in 0.0f64..0.5, clipped in any::<bool>()) {
                let clip = Clip::uniform(-1.0, 1.0, x.len());
                let clip = clipped.then_some(&clip);
                let small = linf_ball(&x, &Epsilon::Uniform(e1), clip).unwrap();
                let big = linf_ball(&x, &Epsilon::Uniform(e1 + extra), clip).unwrap();
                prop_assert!(small.is_subset_of(&big));
            }
        }
    }
}
