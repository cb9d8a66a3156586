//! Replica statistics with a fixed reduction order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sum by recursive halving, so the result does not depend on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error over independent replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// `NaN` with fewer than two replicas.
    pub std_error: f64,
    pub replicas: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, replicas: 0 };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let std_error = if n < 2 { f64::NAN } else { (sample_variance_about(xs, mean) / n as f64).sqrt() };
        Self { mean, std_error, replicas: n }
    }
}

fn sample_variance_about(xs: &[f64], mean: f64) -> f64 {
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&dev) / (xs.len() - 1) as f64
}

/// Unbiased sample variance; `NaN` with fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    sample_variance_about(xs, pairwise_sum(xs) / xs.len() as f64)
}

/// Percentile-bootstrap confidence interval for the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Bootstrap interval for the mean of `xs` from `resamples` draws seeded by `seed`.
pub fn bootstrap_mean_ci(xs: &[f64], level: f64, resamples: usize, seed: u64) -> ConfidenceInterval {
    let n = xs.len();
    if n == 0 || resamples == 0 {
        return ConfidenceInterval { level, lower: f64::NAN, upper: f64::NAN };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..n).map(|_| xs[rng.random_range(0..n)]).collect();
            pairwise_sum(&draw) / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let pick = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    ConfidenceInterval { level, lower: pick(tail), upper: pick(1.0 - tail) }
}
