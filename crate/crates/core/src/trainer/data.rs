use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Labels};

/// Two well-separated 2-D Gaussian blobs centred at `(-2, -2)` (class 0)
/// and `(2, 2)` (class 1), unit-half standard deviation.
pub fn two_blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).expect("valid std");
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let m = if c == 0 { -2.0 } else { 2.0 };
        inputs.push(vec![m + noise.sample(&mut rng), m + noise.sample(&mut rng)]);
        labels.push(c);
    }
    Dataset {
        inputs,
        labels: Labels::Classes(labels),
    }
}

/// `y = x^3 + e`, `x ~ U[-4, 4]`, `e ~ N(0, 9)`.
pub fn cubic_regression(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 3.0).expect("valid std");
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-4.0..=4.0);
        inputs.push(vec![x]);
        targets.push(vec![x.powi(3) + noise.sample(&mut rng)]);
    }
    Dataset {
        inputs,
        labels: Labels::Values(targets),
    }
}

/// Advisories of the collision-avoidance toy task.
pub const HCAS_CLASSES: [&str; 5] = ["COC", "WL", "WR", "SL", "SR"];

/// Advisory for a normalized state `(range, bearing, heading, time)` in `[0, 1]^4`.
///
/// Far intruders give clear-of-conflict; closer ones a left or right turn
/// whose side follows bearing and heading, strong when very close.
pub fn hcas_label(x: &[f64]) -> usize {
    let (range, bearing, heading, time) = (x[0], x[1] - 0.5, x[2] - 0.5, x[3]);
    if range > 0.5 + 0.2 * time {
        return 0;
    }
    let right = bearing + 0.3 * heading >= 0.0;
    let strong = range < 0.25;
    match (strong, right) {
        (false, false) => 1,
        (false, true) => 2,
        (true, false) => 3,
        (true, true) => 4,
    }
}

/// Uniform states in `[0, 1]^4` labelled by [`hcas_label`].
pub fn hcas_like(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    let labels = inputs.iter().map(|x| hcas_label(x)).collect();
    Dataset {
        inputs,
        labels: Labels::Classes(labels),
    }
}
