//! Ito balance identities for the pair process.
//!
//! For a test function `F(u, x)` the pair `R_{t,s} = X^1_t - X^2_s` satisfies
//!
//! ```text
//! E int_0^t F(t-s, R_{t,s}) ds = E int_0^t F(0, R_{s,s}) ds
//!     + E int_0^t int_0^u (d_u F + Lap F)(u-s, R_{u,s}) ds du
//!     + chi E int_0^t (int_0^u grad F(u-s, R_{u,s}) ds) . (grad b_{u+eps}(X^1_u) + Dbar^1_u) du
//! ```
//!
//! and `psi(x, y) = phi(|x-y|^2)`, `phi(r) = r^{nu/2} / (1 + r^{nu/2})`,
//! `nu = 4 - 2 gamma`, satisfies the two-particle version
//! `J1_t = J1_0 + 2 J2_t + 2 J3_t + 2 B_t`.

use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_mean_ci, ConfidenceInterval, Estimate};
use super::{map_replicas, require_pairs, trapezoid_weight, EstimatorParams};
use crate::error::Result;
use crate::geom::{self, Vec2};
use crate::kernels::background_field_unchecked;
use crate::scalar::golden_max;
use crate::simulator::{HistoryConvolution, TrajectoryEnsemble};

/// Confidence level of the residual intervals.
pub const CI_LEVEL: f64 = 0.99;
/// Bootstrap resamples of the residual intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Built-in test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItoTest {
    /// `F(u, x) = exp(-u - |x|^2)` in the pair identity.
    Gaussian,
    /// The two-particle `psi` balance.
    Psi,
}

/// `(F, d_u F, grad F, Lap F)` of `F(u, x) = exp(-u - |x|^2)`.
pub fn gaussian_test_function(u: f64, x: Vec2) -> (f64, f64, Vec2, f64) {
    let r2 = geom::norm2(x);
    let f = (-u - r2).exp();
    (f, -f, geom::scale(x, -2.0 * f), (4.0 * r2 - 4.0) * f)
}

fn nu(gamma: f64) -> f64 {
    4.0 - 2.0 * gamma
}

/// `psi(x, y) = |x-y|^nu / (1 + |x-y|^nu)`.
pub fn psi(x: Vec2, y: Vec2, gamma: f64) -> f64 {
    let rn = geom::norm(geom::sub(x, y)).powf(nu(gamma));
    rn / (1.0 + rn)
}

/// `grad_x psi = nu |x-y|^{nu-2} / (1 + |x-y|^nu)^2 (x - y)`; zero on the diagonal.
pub fn psi_grad_x(x: Vec2, y: Vec2, gamma: f64) -> Vec2 {
    let d = geom::sub(x, y);
    let r = geom::norm(d);
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let v = nu(gamma);
    let rn = r.powf(v);
    geom::scale(d, v * r.powf(v - 2.0) / ((1.0 + rn) * (1.0 + rn)))
}

/// `Lap_x psi = nu^2 |x-y|^{nu-2} / (1 + |x-y|^nu)^2 (1 - 2 |x-y|^nu / (1 + |x-y|^nu))`.
pub fn psi_laplacian_x(x: Vec2, y: Vec2, gamma: f64) -> f64 {
    laplacian_radial(geom::norm(geom::sub(x, y)), gamma)
}

fn laplacian_radial(r: f64, gamma: f64) -> f64 {
    let v = nu(gamma);
    let rn = r.powf(v);
    v * v * r.powf(v - 2.0) / ((1.0 + rn) * (1.0 + rn)) * (1.0 - 2.0 * rn / (1.0 + rn))
}

/// `f_eta(r) = Lap psi(r) - (nu^2 - eta) r^{nu-2}`, bounded below on `(0, inf)`.
pub fn psi_f_eta(r: f64, gamma: f64, eta: f64) -> f64 {
    let v = nu(gamma);
    laplacian_radial(r, gamma) - (v * v - eta) * r.powf(v - 2.0)
}

/// Smallest `L >= 0` with `Lap_x psi >= (nu^2 - eta) |x-y|^{nu-2} - L`,
/// from a log-grid scan of `f_eta` on `[1e-8, 1e8]` and a golden-section polish.
pub fn l_eta(gamma: f64, eta: f64) -> f64 {
    const POINTS: usize = 4000;
    let (lo, hi) = (1e-8f64.ln(), 1e8f64.ln());
    let node = |k: usize| lo + (hi - lo) * k as f64 / (POINTS - 1) as f64;
    let neg = |s: f64| -psi_f_eta(s.exp(), gamma, eta);
    let (best, _) = (0..POINTS).map(|k| (k, neg(node(k)))).fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let (_, peak) = golden_max(neg, node(best.saturating_sub(1)), node((best + 1).min(POINTS - 1)), 1e-12);
    peak.max(neg(node(best))).max(0.0)
}

/// Output of [`ito_balance_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    pub test: ItoTest,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Per-replica `lhs - rhs`.
    pub residual: Estimate,
    pub ci: ConfidenceInterval,
    /// Whether zero lies in the interval.
    pub consistent: bool,
    /// Diagonal terms skipped because the pair coincided exactly.
    pub divergent_terms: usize,
}

struct Balance {
    lhs: f64,
    rhs: f64,
    divergent: usize,
}

/// Monte Carlo check of the Ito balance for a built-in test function.
///
/// The generator term is integrated with the trapezoid rule and the drift
/// terms with the left-endpoint rule of the Euler scheme. The residual
/// interval is a percentile bootstrap over replicas.
pub fn ito_balance_check(ensemble: &TrajectoryEnsemble, test: ItoTest, ep: &EstimatorParams) -> Result<ItoReport> {
    let finite = require_pairs(ensemble)?;
    let config = ensemble.config();
    let last = ep.horizon_steps(config)?;
    let n = config.n_particles;
    let pairs = ep.pairs.pairs(n);
    let conv = HistoryConvolution::new(config);
    let balances = map_replicas(&finite, |r| {
        let path = ensemble.path(r);
        let drift: Vec<Vec2> = if config.params.chi == 0.0 {
            vec![[0.0, 0.0]; (last + 1) * n]
        } else {
            (0..=last)
                .flat_map(|m| (0..n).map(move |i| (m, i)))
                .map(|(m, i)| {
                    let x = path[m * n + i];
                    let t = m as f64 * config.dt + config.params.epsilon;
                    let (_, gb) = background_field_unchecked(t, x, &config.source, &config.params);
                    geom::scale(geom::add(gb, conv.mean(path, i, m)), config.params.chi)
                })
                .collect()
        };
        let mut total = Balance { lhs: 0.0, rhs: 0.0, divergent: 0 };
        for &(i, j) in &pairs {
            let b = match test {
                ItoTest::Gaussian => gaussian_balance(path, n, (i, j), last, config.dt, &drift),
                ItoTest::Psi => psi_balance(path, n, (i, j), last, config.dt, &drift, ep.gamma),
            };
            total.lhs += b.lhs;
            total.rhs += b.rhs;
            total.divergent += b.divergent;
        }
        let k = pairs.len() as f64;
        Balance { lhs: total.lhs / k, rhs: total.rhs / k, divergent: total.divergent }
    });
    let lhs: Vec<f64> = balances.iter().map(|b| b.lhs).collect();
    let rhs: Vec<f64> = balances.iter().map(|b| b.rhs).collect();
    let res: Vec<f64> = balances.iter().map(|b| b.lhs - b.rhs).collect();
    let ci = bootstrap_mean_ci(&res, CI_LEVEL, BOOTSTRAP_RESAMPLES, config.seed ^ 0x1b0_ba1a);
    Ok(ItoReport {
        test,
        lhs: Estimate::from_samples(&lhs),
        rhs: Estimate::from_samples(&rhs),
        residual: Estimate::from_samples(&res),
        ci,
        consistent: ci.contains(0.0),
        divergent_terms: balances.iter().map(|b| b.divergent).sum(),
    })
}

fn gaussian_balance(path: &[Vec2], n: usize, (i, j): (usize, usize), last: usize, dt: f64, drift: &[Vec2]) -> Balance {
    let t = |m: usize| m as f64 * dt;
    let pair = |m: usize, l: usize| geom::sub(path[m * n + i], path[l * n + j]);
    let (mut lhs, mut initial, mut generator, mut transport) = (0.0, 0.0, 0.0, 0.0);
    for l in 0..=last {
        let w = trapezoid_weight(l, last) * dt;
        lhs += w * gaussian_test_function(t(last) - t(l), pair(last, l)).0;
        initial += w * gaussian_test_function(0.0, pair(l, l)).0;
        let mut inner = 0.0;
        if l < last {
            for m in l..=last {
                let (_, fu, _, lap) = gaussian_test_function(t(m) - t(l), pair(m, l));
                let wm = if m == l || m == last { 0.5 } else { 1.0 };
                inner += wm * (fu + lap);
            }
        }
        generator += w * inner * dt;
    }
    for m in 1..last {
        let d = drift[m * n + i];
        if d == [0.0, 0.0] {
            continue;
        }
        let mut v = [0.0, 0.0];
        for l in 0..=m {
            let (_, _, g, _) = gaussian_test_function(t(m) - t(l), pair(m, l));
            v = geom::add(v, geom::scale(g, trapezoid_weight(l, m) * dt));
        }
        transport += geom::dot(v, d) * dt;
    }
    Balance { lhs, rhs: initial + generator + transport, divergent: 0 }
}

#[allow(clippy::too_many_arguments)]
fn psi_balance(
    path: &[Vec2],
    n: usize,
    (i, j): (usize, usize),
    last: usize,
    dt: f64,
    drift: &[Vec2],
    gamma: f64,
) -> Balance {
    let x = |m: usize, k: usize| path[m * n + k];
    let lhs = psi(x(last, i), x(last, j), gamma);
    let mut rhs = psi(x(0, i), x(0, j), gamma);
    let mut divergent = 0;
    for m in 0..=last {
        let (xi, xj) = (x(m, i), x(m, j));
        if xi == xj {
            divergent += 1;
            continue;
        }
        rhs += 2.0 * trapezoid_weight(m, last) * dt * psi_laplacian_x(xi, xj, gamma);
        if m < last {
            rhs += 2.0 * dt * geom::dot(psi_grad_x(xi, xj, gamma), drift[m * n + i]);
        }
    }
    Balance { lhs, rhs, divergent }
}
