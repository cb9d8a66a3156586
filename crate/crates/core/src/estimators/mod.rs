//! Monte Carlo estimates of the pair functionals and consistency diagnostics.
//!
//! With `R^{i,j}_{s,u} = X^i_s - X^j_u` and horizon `t`:
//!
//! ```text
//! E1 = E int_0^t |R_{s,s}|^{-2(gamma-1)} ds
//! E2 = E int_0^t int_0^s (s - u + |R_{s,u}|^2)^{-gamma} du ds
//! E3 = E int_0^t int_0^s |grad K_{s-u}(R_{s,u})|^{2 gamma/3} du ds
//! E4 = E int_0^t |D_s|^{2(gamma-1)} ds
//! S  = int_0^t (t - s + alpha |R_{t,s}|^2)^{-gamma} ds      (and S-bar with +delta)
//! ```
//!
//! Outer time integrals use the trapezoid rule on the simulation grid;
//! inner history integrals use the same `u < s` left-endpoint rule as the
//! simulator's drift.

mod ito;
mod martingale;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::constants::{alpha_upper, kappa};
use crate::error::{domain, Result};
use crate::geom::{self, Vec2};
use crate::kernels::{chemo_kernel_grad, GradEnvelope, KernelParams};
use crate::simulator::{HistoryConvolution, SimConfig, TrajectoryEnsemble};

pub use ito::{
    gaussian_test_function, ito_balance_check, l_eta, psi, psi_f_eta, psi_grad_x, psi_laplacian_x, ItoReport, ItoTest,
};
pub use martingale::{martingale_residual, martingale_residual_unchecked, Bump, MartingaleReport, PathFunctional};
pub use stats::{ConfidenceInterval, Estimate};

/// Which ordered particle pairs enter the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PairSelection {
    /// The pair `(1, 2)` only.
    Single,
    /// Every ordered pair `i != j`, averaged within each replica.
    #[default]
    AllOrdered,
}

impl PairSelection {
    pub fn pairs(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            PairSelection::Single => vec![(0, 1)],
            PairSelection::AllOrdered => {
                (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect()
            }
        }
    }
}

/// Exponents and horizon of the functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub gamma: f64,
    pub alpha: f64,
    /// Offset in the S-bar functional.
    pub delta: f64,
    pub horizon: f64,
    pub pairs: PairSelection,
}

impl EstimatorParams {
    pub fn new(gamma: f64, alpha: f64, delta: f64, horizon: f64) -> Result<Self> {
        let ep = Self { gamma, alpha, delta, horizon, pairs: PairSelection::default() };
        ep.validate()?;
        Ok(ep)
    }

    pub fn with_pairs(mut self, pairs: PairSelection) -> Self {
        self.pairs = pairs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.5 && self.gamma < 2.0) {
            return domain(format!("gamma must lie in (3/2, 2), got {}", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha < alpha_upper(self.gamma)) {
            return domain(format!("alpha must lie in (0, {}), got {}", alpha_upper(self.gamma), self.alpha));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return domain(format!("delta must be nonnegative, got {}", self.delta));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {}", self.horizon));
        }
        Ok(())
    }

    /// Last grid index `M` with `M dt <= horizon`; errors if the ensemble is shorter.
    pub fn horizon_steps(&self, config: &SimConfig) -> Result<usize> {
        self.validate()?;
        let m = (self.horizon / config.dt * (1.0 + 1e-12)).floor() as usize;
        if m == 0 {
            return domain("horizon is shorter than one time step");
        }
        if m > config.n_steps {
            return domain(format!("horizon {} exceeds the simulated time {}", self.horizon, config.horizon()));
        }
        Ok(m)
    }
}

/// Trapezoid weight of grid index `m` on `0..=last`.
#[inline]
pub(crate) fn trapezoid_weight(m: usize, last: usize) -> f64 {
    if m == 0 || m == last {
        0.5
    } else {
        1.0
    }
}

pub(crate) fn map_replicas<T: Send>(replicas: &[usize], f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        replicas.par_iter().map(|&r| f(r)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    replicas.iter().map(|&r| f(r)).collect()
}

fn require_pairs(ensemble: &TrajectoryEnsemble) -> Result<Vec<usize>> {
    if ensemble.n_particles() < 2 {
        return domain("estimators need at least two particles");
    }
    let finite = ensemble.finite_replicas();
    if finite.is_empty() {
        return domain("no finite replica to estimate from");
    }
    Ok(finite)
}

/// Pair functionals of one replica, averaged over the selected pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaMoments {
    pub replica: usize,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub s: f64,
    pub s_bar: f64,
    /// Grid terms of E1 skipped because the pair coincided exactly.
    pub divergent_terms: usize,
}

/// Output of [`moment_estimates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub e1: Estimate,
    pub e2: Estimate,
    pub e3: Estimate,
    pub e4: Estimate,
    pub s: Estimate,
    pub s_bar: Estimate,
    pub divergent_terms: usize,
    pub blown_up_replicas: usize,
    pub horizon_steps: usize,
    pub estimator: EstimatorParams,
    pub config: SimConfig,
    pub per_replica: Vec<ReplicaMoments>,
}

struct PairMoments {
    values: [f64; 6],
    divergent_terms: usize,
}

#[allow(clippy::too_many_arguments)]
fn pair_moments(
    path: &[Vec2],
    n: usize,
    (i, j): (usize, usize),
    last: usize,
    conv: &HistoryConvolution,
    params: &KernelParams,
    ep: &EstimatorParams,
    dt: f64,
) -> PairMoments {
    let g = ep.gamma;
    let q1 = 2.0 * (g - 1.0);
    let q3 = 2.0 * g / 3.0;
    let (mut e1, mut e2, mut e3, mut e4) = (0.0, 0.0, 0.0, 0.0);
    let mut divergent_terms = 0;
    for m in 0..=last {
        let w = trapezoid_weight(m, last) * dt;
        let xi = path[m * n + i];
        let r = geom::norm(geom::sub(xi, path[m * n + j]));
        if r == 0.0 {
            divergent_terms += 1;
        } else {
            e1 += w * r.powf(-q1);
        }
        let (mut in2, mut in3) = (0.0, 0.0);
        for l in 0..m {
            let lag = (m - l) as f64 * dt;
            let d = geom::sub(xi, path[l * n + j]);
            in2 += (lag + geom::norm2(d)).powf(-g);
            let gk = chemo_kernel_grad(lag, d, params).expect("lag is positive");
            in3 += geom::norm(gk).powf(q3);
        }
        e2 += w * in2 * dt;
        e3 += w * in3 * dt;
        e4 += w * geom::norm(conv.pair(path, i, j, m)).powf(q1);
    }
    let (s, s_bar) = s_functionals(path, n, (i, j), last, ep, dt);
    PairMoments { values: [e1, e2, e3, e4, s, s_bar], divergent_terms }
}

/// Discrete `S^{i,j}` and `S-bar^{i,j,delta}` at grid index `m`.
fn s_functionals(path: &[Vec2], n: usize, (i, j): (usize, usize), m: usize, ep: &EstimatorParams, dt: f64) -> (f64, f64) {
    let xt = path[m * n + i];
    let (mut s, mut s_bar) = (0.0, 0.0);
    for l in 0..m {
        let lag = (m - l) as f64 * dt;
        let a = ep.alpha * geom::norm2(geom::sub(xt, path[l * n + j]));
        s += (lag + a).powf(-ep.gamma);
        s_bar += (lag + ep.delta + a).powf(-ep.gamma);
    }
    (s * dt, s_bar * dt)
}

/// Replica-averaged E1-E4, S and S-bar.
///
/// Blown-up replicas are excluded and counted.
pub fn moment_estimates(ensemble: &TrajectoryEnsemble, ep: &EstimatorParams) -> Result<EstimateReport> {
    let finite = require_pairs(ensemble)?;
    let config = ensemble.config();
    let last = ep.horizon_steps(config)?;
    let n = config.n_particles;
    let pairs = ep.pairs.pairs(n);
    let conv = HistoryConvolution::new(config);
    let per_replica = map_replicas(&finite, |r| {
        let path = ensemble.path(r);
        let mut acc = [0.0; 6];
        let mut divergent_terms = 0;
        for &pair in &pairs {
            let pm = pair_moments(path, n, pair, last, &conv, &config.params, ep, config.dt);
            for (a, x) in acc.iter_mut().zip(pm.values) {
                *a += x;
            }
            divergent_terms += pm.divergent_terms;
        }
        let k = pairs.len() as f64;
        ReplicaMoments {
            replica: r,
            e1: acc[0] / k,
            e2: acc[1] / k,
            e3: acc[2] / k,
            e4: acc[3] / k,
            s: acc[4] / k,
            s_bar: acc[5] / k,
            divergent_terms,
        }
    });
    let column = |f: fn(&ReplicaMoments) -> f64| Estimate::from_samples(&per_replica.iter().map(f).collect::<Vec<_>>());
    Ok(EstimateReport {
        e1: column(|m| m.e1),
        e2: column(|m| m.e2),
        e3: column(|m| m.e3),
        e4: column(|m| m.e4),
        s: column(|m| m.s),
        s_bar: column(|m| m.s_bar),
        divergent_terms: per_replica.iter().map(|m| m.divergent_terms).sum(),
        blown_up_replicas: ensemble.n_replicas() - finite.len(),
        horizon_steps: last,
        estimator: *ep,
        config: config.clone(),
        per_replica,
    })
}

/// Default slack on the discrete inequality checks.
pub const DEFAULT_SLACK: f64 = 1.05;

/// Output of [`drift_domination_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    /// `(replica, pair, step)` triples examined.
    pub checked: usize,
    /// `|D| > slack * c kappa S^{1/(2(gamma-1))}`.
    pub violations: usize,
    pub violation_fraction: f64,
    /// Largest `|D| / (c kappa S^{1/(2(gamma-1))})`.
    pub max_ratio: f64,
    /// `|D|` above the summed kernel envelope.
    pub envelope_violations: usize,
    /// Discrete functional inequality with `a = 1/2`, `b = gamma - 1` failing.
    pub inequality_violations: usize,
    pub slack: f64,
}

/// Checks `|D^{i,j}_m| <= slack * sqrt(theta) C0(4 alpha/theta) kappa(1/2, gamma-1) / (4 pi) * S_m^{1/(2(gamma-1))}`
/// at every step up to the horizon, together with the two intermediate
/// bounds it is assembled from.
pub fn drift_domination_check(ensemble: &TrajectoryEnsemble, ep: &EstimatorParams, slack: f64) -> Result<DominationReport> {
    let finite = require_pairs(ensemble)?;
    let config = ensemble.config();
    let last = ep.horizon_steps(config)?;
    let (n, dt, eps) = (config.n_particles, config.dt, config.params.epsilon);
    let pairs = ep.pairs.pairs(n);
    let env = GradEnvelope::new(ep.alpha, config.params.theta)?;
    let k_half = kappa(0.5, ep.gamma - 1.0)?;
    let q = 1.0 / (2.0 * (ep.gamma - 1.0));
    let conv = HistoryConvolution::new(config);
    let cutoff = config.max_lag();
    let parts = map_replicas(&finite, |r| {
        let path = ensemble.path(r);
        let mut out = (0usize, 0usize, 0.0f64, 0usize, 0usize);
        for &(i, j) in &pairs {
            for m in 1..=last {
                let d = geom::norm(conv.pair(path, i, j, m));
                let xi = path[m * n + i];
                let (mut env_sum, mut g32, mut gg) = (0.0, 0.0, 0.0);
                for l in m.saturating_sub(cutoff)..m {
                    let lag = (m - l) as f64 * dt;
                    let x = geom::sub(xi, path[l * n + j]);
                    env_sum += env.eval(lag, x, eps);
                    let g = 1.0 / (lag + eps + ep.alpha * geom::norm2(x));
                    g32 += g.powf(1.5);
                    gg += g.powf(ep.gamma);
                }
                let (s, _) = s_functionals(path, n, (i, j), m, ep, dt);
                let bound = env.prefactor() * k_half * s.powf(q);
                let ratio = d / bound;
                out.0 += 1;
                if d > slack * bound {
                    out.1 += 1;
                }
                out.2 = out.2.max(ratio);
                if d > env_sum * dt * (1.0 + 1e-12) {
                    out.3 += 1;
                }
                if g32 * dt > k_half * (gg * dt).powf(q) * (1.0 + 1e-12) {
                    out.4 += 1;
                }
            }
        }
        out
    });
    let mut rep = DominationReport {
        checked: 0,
        violations: 0,
        violation_fraction: 0.0,
        max_ratio: 0.0,
        envelope_violations: 0,
        inequality_violations: 0,
        slack,
    };
    for p in parts {
        rep.checked += p.0;
        rep.violations += p.1;
        rep.max_ratio = rep.max_ratio.max(p.2);
        rep.envelope_violations += p.3;
        rep.inequality_violations += p.4;
    }
    rep.violation_fraction = if rep.checked == 0 { 0.0 } else { rep.violations as f64 / rep.checked as f64 };
    Ok(rep)
}

/// `max_{s < t} |path_t - path_s| / (t - s)^beta` over grid pairs.
pub fn holder_constant(path: &[Vec2], dt: f64, beta: f64) -> f64 {
    let mut z: f64 = 0.0;
    for a in 0..path.len() {
        for b in a + 1..path.len() {
            let gap = ((b - a) as f64 * dt).powf(beta);
            z = z.max(geom::norm(geom::sub(path[b], path[a])) / gap);
        }
    }
    z
}

/// Output of [`holder_modulus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    /// `(2 gamma - 3) / (2 (gamma - 1))`.
    pub beta: f64,
    /// Empirical constant of particle 1 in each finite replica.
    pub z_hat: Vec<f64>,
    /// Matching right sides `(1/(N-1)) sum_j [1 + int |D^{1,j}|^{2(gamma-1)}]`.
    pub bound: Vec<f64>,
    /// Particle-replica combinations examined.
    pub checked: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub slack: f64,
}

/// Hoelder modulus of the integrated interaction `Gamma^i_t = int_0^t (1/(N-1)) sum_j D^{i,j}_s ds`.
///
/// `Gamma` and its bound are both taken without the factor `chi`.
pub fn holder_modulus(ensemble: &TrajectoryEnsemble, ep: &EstimatorParams, slack: f64) -> Result<HolderReport> {
    let finite = require_pairs(ensemble)?;
    let config = ensemble.config();
    let last = ep.horizon_steps(config)?;
    let (n, dt) = (config.n_particles, config.dt);
    let beta = (2.0 * ep.gamma - 3.0) / (2.0 * (ep.gamma - 1.0));
    let q = 2.0 * (ep.gamma - 1.0);
    let conv = HistoryConvolution::new(config);
    let particles: Vec<usize> = match ep.pairs {
        PairSelection::Single => vec![0],
        PairSelection::AllOrdered => (0..n).collect(),
    };
    let parts = map_replicas(&finite, |r| {
        let path = ensemble.path(r);
        particles
            .iter()
            .map(|&i| {
                let mut gamma_path = Vec::with_capacity(last + 1);
                let mut acc = [0.0, 0.0];
                gamma_path.push(acc);
                for m in 0..last {
                    acc = geom::add(acc, geom::scale(conv.mean(path, i, m), dt));
                    gamma_path.push(acc);
                }
                let z = holder_constant(&gamma_path, dt, beta);
                let mut rhs = 0.0;
                for j in (0..n).filter(|&j| j != i) {
                    let series: f64 = (0..=last).map(|m| geom::norm(conv.pair(path, i, j, m)).powf(q)).sum();
                    rhs += 1.0 + series * dt;
                }
                (z, rhs / (n - 1) as f64)
            })
            .collect::<Vec<_>>()
    });
    let mut rep = HolderReport { beta, z_hat: Vec::new(), bound: Vec::new(), checked: 0, violations: 0, max_ratio: 0.0, slack };
    for per_particle in parts {
        rep.z_hat.push(per_particle[0].0);
        rep.bound.push(per_particle[0].1);
        for (z, b) in per_particle {
            rep.checked += 1;
            if z > slack * b {
                rep.violations += 1;
            }
            rep.max_ratio = rep.max_ratio.max(z / b);
        }
    }
    Ok(rep)
}

/// One row of [`epsilon_refinement`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub e1: Estimate,
    pub e4: Estimate,
}

/// Re-runs `config` with each smoothing parameter, same seed and noise, and
/// estimates E1 and E4 on each run.
pub fn epsilon_refinement(config: &SimConfig, eps_list: &[f64], ep: &EstimatorParams) -> Result<Vec<EpsilonRow>> {
    eps_list
        .iter()
        .map(|&epsilon| {
            let mut c = config.clone();
            c.params.epsilon = epsilon;
            let ens = crate::simulator::run(&c)?;
            let rep = moment_estimates(&ens, ep)?;
            Ok(EpsilonRow { epsilon, e1: rep.e1, e4: rep.e4 })
        })
        .collect()
}

/// `max / min` of the E4 estimates over the refinement rows.
pub fn refinement_spread(rows: &[EpsilonRow]) -> f64 {
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.e4.mean), hi.max(r.e4.mean)));
    hi / lo
}

#[cfg(test)]
mod tests;
