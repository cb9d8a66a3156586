//! Empirical martingale-problem residual.
//!
//! For a test function `phi` and a bounded path functional `Phi` measurable
//! up to time `s`, each replica contributes
//!
//! ```text
//! Psi = (1/N) sum_i Phi(X^i) [ phi(X^i_t) - phi(X^i_s)
//!         - int_s^t ( Lap phi(X^i_u) + grad phi(X^i_u) . drift^i_u ) du ]
//! ```
//!
//! where the interaction in `drift^i` is the pairwise empirical sum over
//! `j != i`. Its mean vanishes and its variance decays like `1/N`.

use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_mean_ci, sample_variance, ConfidenceInterval, Estimate};
use super::{map_replicas, require_pairs, trapezoid_weight};
use super::ito::{BOOTSTRAP_RESAMPLES, CI_LEVEL};
use crate::error::{domain, Result};
use crate::geom::{self, Vec2};
use crate::kernels::background_field_unchecked;
use crate::simulator::{HistoryConvolution, TrajectoryEnsemble};

/// `phi(x) = (1 - |x-c|^2/r^2)_+^3`, a `C^2` bump supported on the disk of radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec2,
    pub radius: f64,
}

impl Bump {
    pub fn new(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !geom::is_finite(center) {
            return domain("bump needs a finite center and positive radius");
        }
        Ok(Self { center, radius })
    }

    fn q(&self, x: Vec2) -> f64 {
        geom::norm2(geom::sub(x, self.center)) / (self.radius * self.radius)
    }

    pub fn value(&self, x: Vec2) -> f64 {
        let q = self.q(x);
        if q >= 1.0 {
            0.0
        } else {
            (1.0 - q).powi(3)
        }
    }

    /// `-6 (1-q)^2 (x-c) / r^2`.
    pub fn grad(&self, x: Vec2) -> Vec2 {
        let q = self.q(x);
        if q >= 1.0 {
            return [0.0, 0.0];
        }
        geom::scale(geom::sub(x, self.center), -6.0 * (1.0 - q).powi(2) / (self.radius * self.radius))
    }

    /// `(12 / r^2) (1-q) (3q-1)`.
    pub fn laplacian(&self, x: Vec2) -> f64 {
        let q = self.q(x);
        if q >= 1.0 {
            return 0.0;
        }
        12.0 / (self.radius * self.radius) * (1.0 - q) * (3.0 * q - 1.0)
    }
}

/// Bounded functional of one particle path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathFunctional {
    Constant,
    /// `clamp(X_tau[coordinate], lower, upper)`.
    Window { tau: f64, coordinate: usize, lower: f64, upper: f64 },
}

impl PathFunctional {
    fn eval(&self, path: &[Vec2], n: usize, i: usize, dt: f64) -> f64 {
        match *self {
            PathFunctional::Constant => 1.0,
            PathFunctional::Window { tau, coordinate, lower, upper } => {
                let m = grid_index(tau, dt);
                path[m * n + i][coordinate].clamp(lower, upper)
            }
        }
    }
}

fn grid_index(t: f64, dt: f64) -> usize {
    (t / dt * (1.0 + 1e-12)).floor() as usize
}

/// Output of [`martingale_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub residual: Estimate,
    /// Sample variance of the per-replica residual.
    pub variance: f64,
    pub ci: ConfidenceInterval,
    pub consistent: bool,
}

/// Residual of the martingale problem on `[s, t]` under the empirical measure.
///
/// `Phi` must only look at times up to `s`.
pub fn martingale_residual(
    ensemble: &TrajectoryEnsemble,
    phi: &Bump,
    functional: &PathFunctional,
    s: f64,
    t: f64,
) -> Result<MartingaleReport> {
    if let PathFunctional::Window { tau, coordinate, lower, upper } = *functional {
        if !(tau >= 0.0 && tau <= s) {
            return domain(format!("path functional looks at time {tau}, after s = {s}"));
        }
        if coordinate > 1 || !(lower <= upper) {
            return domain("window needs coordinate 0 or 1 and lower <= upper");
        }
    }
    martingale_residual_unchecked(ensemble, phi, functional, s, t)
}

/// [`martingale_residual`] without the adaptedness check on `Phi`, for negative controls.
pub fn martingale_residual_unchecked(
    ensemble: &TrajectoryEnsemble,
    phi: &Bump,
    functional: &PathFunctional,
    s: f64,
    t: f64,
) -> Result<MartingaleReport> {
    let finite = require_pairs(ensemble)?;
    let config = ensemble.config();
    let dt = config.dt;
    if !(s > 0.0 && s < t) {
        return domain(format!("need 0 < s < t, got s = {s}, t = {t}"));
    }
    let (ms, mt) = (grid_index(s, dt), grid_index(t, dt));
    if mt > config.n_steps || ms >= mt {
        return domain(format!("[{s}, {t}] is not resolved by the simulated grid"));
    }
    if let PathFunctional::Window { tau, .. } = *functional {
        if grid_index(tau, dt) > config.n_steps {
            return domain(format!("path functional time {tau} exceeds the simulated time"));
        }
    }
    let n = config.n_particles;
    let conv = HistoryConvolution::new(config);
    let p = &config.params;
    let values = map_replicas(&finite, |r| {
        let path = ensemble.path(r);
        let mut total = 0.0;
        for i in 0..n {
            let mut inc = phi.value(path[mt * n + i]) - phi.value(path[ms * n + i]);
            for m in ms..=mt {
                let x = path[m * n + i];
                inc -= trapezoid_weight(m - ms, mt - ms) * dt * phi.laplacian(x);
                if m < mt && p.chi != 0.0 {
                    let g = phi.grad(x);
                    if g != [0.0, 0.0] {
                        let tb = m as f64 * dt + p.epsilon;
                        let (_, gb) = background_field_unchecked(tb, x, &config.source, p);
                        let drift = geom::scale(geom::add(gb, conv.mean(path, i, m)), p.chi);
                        inc -= dt * geom::dot(g, drift);
                    }
                }
            }
            total += functional.eval(path, n, i, dt) * inc;
        }
        total / n as f64
    });
    let ci = bootstrap_mean_ci(&values, CI_LEVEL, BOOTSTRAP_RESAMPLES, config.seed ^ 0x3a7_1e5);
    Ok(MartingaleReport {
        residual: Estimate::from_samples(&values),
        variance: sample_variance(&values),
        ci,
        consistent: ci.contains(0.0),
    })
}
