//! Euler-Maruyama integration of the smoothed particle system
//!
//! ```text
//! X^i_{m+1} = X^i_m + sqrt(2) dW^i_m + chi grad b_{t_m + eps}(X^i_m) dt
//!           + chi/(N-1) sum_{j != i} D^{i,j}_m dt,
//! D^{i,j}_m = sum_{l < m} H^eps_{(m-l) dt}(X^i_m - X^j_l) dt.
//! ```
//!
//! The history convolution uses the left-endpoint rule in the memory
//! variable; the `l = m` term would contribute `H^eps_0 = 0`.

mod config;
pub mod io;
mod noise;

use crate::error::{domain, Error, Result};
use crate::geom::{self, Vec2};
use crate::kernels::{self, KernelParams, LagTable};
use crate::quadrature::integrate;

pub use config::{InitLaw, NoiseMode, SimConfig};
pub use noise::{ChaChaNoise, CounterRng, MirroredNoise, NoiseSource, RngProvenance, ZeroNoise, INIT_TAG, NOISE_TAG};

use serde::{Deserialize, Serialize};

/// Outcome of one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplicaStatus {
    Ok,
    /// A position became non-finite at `step`; later rows are NaN.
    BlownUp { step: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct ReplicaPath {
    // Time-major: row m holds the N positions at t_m.
    positions: Vec<Vec2>,
    status: ReplicaStatus,
}

/// Positions of every particle of every replica on the grid `t_m = m dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    config: SimConfig,
    provenance: RngProvenance,
    replicas: Vec<ReplicaPath>,
}

impl TrajectoryEnsemble {
    /// Wraps externally produced paths, one time-major vector per replica.
    ///
    /// Replicas containing a non-finite entry are marked as blown up at the
    /// first such row.
    pub fn from_paths(config: SimConfig, provenance: RngProvenance, paths: Vec<Vec<Vec2>>) -> Result<Self> {
        config.validate()?;
        let n = config.n_particles;
        let expected = (config.n_steps + 1) * n;
        if paths.len() != config.n_replicas {
            return Err(Error::Format(format!("expected {} replicas, got {}", config.n_replicas, paths.len())));
        }
        let mut replicas = Vec::with_capacity(paths.len());
        for positions in paths {
            if positions.len() != expected {
                return Err(Error::Format(format!("expected {expected} positions per replica, got {}", positions.len())));
            }
            let status = match positions.iter().position(|x| !geom::is_finite(*x)) {
                Some(k) => ReplicaStatus::BlownUp { step: k / n },
                None => ReplicaStatus::Ok,
            };
            replicas.push(ReplicaPath { positions, status });
        }
        Ok(Self { config, provenance, replicas })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn provenance(&self) -> &RngProvenance {
        &self.provenance
    }

    pub fn n_particles(&self) -> usize {
        self.config.n_particles
    }

    pub fn n_replicas(&self) -> usize {
        self.replicas.len()
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    /// Number of stored time rows of replica `r` (`n_steps + 1` once complete).
    pub fn rows(&self, r: usize) -> usize {
        self.replicas[r].positions.len() / self.config.n_particles
    }

    /// Time-major positions of replica `r`.
    pub fn path(&self, r: usize) -> &[Vec2] {
        &self.replicas[r].positions
    }

    /// Positions of replica `r` at step `m`.
    pub fn row(&self, r: usize, m: usize) -> &[Vec2] {
        let n = self.config.n_particles;
        &self.replicas[r].positions[m * n..(m + 1) * n]
    }

    pub fn position(&self, r: usize, m: usize, i: usize) -> Vec2 {
        self.replicas[r].positions[m * self.config.n_particles + i]
    }

    pub fn status(&self, r: usize) -> ReplicaStatus {
        self.replicas[r].status
    }

    /// Indices of the replicas that finished without blowing up.
    pub fn finite_replicas(&self) -> Vec<usize> {
        (0..self.replicas.len()).filter(|&r| self.replicas[r].status == ReplicaStatus::Ok).collect()
    }

    /// First blown-up replica, as an error.
    pub fn check_finite(&self) -> Result<()> {
        for (replica, path) in self.replicas.iter().enumerate() {
            if let ReplicaStatus::BlownUp { step } = path.status {
                return Err(Error::Blowup { replica, step });
            }
        }
        Ok(())
    }
}

/// Discrete history convolution `D^{i,j}_m` on one replica path.
#[derive(Debug, Clone)]
pub struct HistoryConvolution {
    table: LagTable,
    max_lag: usize,
    n: usize,
    dt: f64,
}

impl HistoryConvolution {
    pub fn new(config: &SimConfig) -> Self {
        let max_lag = config.max_lag().min(config.n_steps);
        Self { table: LagTable::new(&config.params, config.dt, max_lag), max_lag, n: config.n_particles, dt: config.dt }
    }

    fn first_lag_row(&self, m: usize) -> usize {
        m.saturating_sub(self.max_lag)
    }

    /// `D^{i,j}_m`.
    pub fn pair(&self, path: &[Vec2], i: usize, j: usize, m: usize) -> Vec2 {
        let n = self.n;
        let xi = path[m * n + i];
        let mut acc = [0.0, 0.0];
        for l in self.first_lag_row(m)..m {
            self.table.accumulate(m - l, geom::sub(xi, path[l * n + j]), &mut acc);
        }
        geom::scale(acc, self.dt)
    }

    /// `(1/(N-1)) sum_{j != i} D^{i,j}_m`.
    pub fn mean(&self, path: &[Vec2], i: usize, m: usize) -> Vec2 {
        let n = self.n;
        let xi = path[m * n + i];
        let mut acc = [0.0, 0.0];
        for l in self.first_lag_row(m)..m {
            let row = &path[l * n..(l + 1) * n];
            for (j, &xj) in row.iter().enumerate() {
                if j != i {
                    self.table.accumulate(m - l, geom::sub(xi, xj), &mut acc);
                }
            }
        }
        geom::scale(acc, self.dt / (n - 1) as f64)
    }

    /// `D^{i,j}_m` for every stored row `m`.
    pub fn pair_series(&self, path: &[Vec2], i: usize, j: usize) -> Vec<Vec2> {
        (0..path.len() / self.n).map(|m| self.pair(path, i, j, m)).collect()
    }
}

/// Step-0 ensemble: initial positions of every replica, no steps taken.
pub fn init_ensemble(config: &SimConfig) -> Result<TrajectoryEnsemble> {
    config.validate()?;
    let replicas = (0..config.n_replicas)
        .map(|r| {
            let mut positions = Vec::with_capacity((config.n_steps + 1) * config.n_particles);
            positions.extend(config.init.sample(config.seed, r, config.n_particles));
            ReplicaPath { positions, status: ReplicaStatus::Ok }
        })
        .collect();
    Ok(TrajectoryEnsemble { config: config.clone(), provenance: RngProvenance::chacha(config.seed), replicas })
}

struct Stepper<'a> {
    config: &'a SimConfig,
    conv: HistoryConvolution,
    noise: &'a dyn NoiseSource,
    #[cfg(feature = "parallel")]
    split_particles: bool,
}

impl Stepper<'_> {
    fn drift(&self, path: &[Vec2], i: usize, m: usize) -> Vec2 {
        let p: &KernelParams = &self.config.params;
        if p.chi == 0.0 {
            return [0.0, 0.0];
        }
        let x = path[m * self.config.n_particles + i];
        let mut d = self.conv.mean(path, i, m);
        if !self.config.source.is_zero() {
            let t = m as f64 * self.config.dt + p.epsilon;
            let (_, grad_b) = kernels::background_field_unchecked(t, x, &self.config.source, p);
            d = geom::add(d, grad_b);
        }
        geom::scale(d, p.chi)
    }

    /// Appends row `m + 1`; returns `false` on blow-up.
    fn advance(&self, replica: usize, path: &mut Vec<Vec2>, z: &mut [Vec2], drift: &mut [Vec2]) -> bool {
        let n = self.config.n_particles;
        let m = path.len() / n - 1;
        let dt = self.config.dt;
        let compute = |(i, d): (usize, &mut Vec2)| *d = self.drift(path, i, m);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if self.split_particles {
                drift.par_iter_mut().enumerate().for_each(compute);
            } else {
                drift.iter_mut().enumerate().for_each(compute);
            }
        }
        #[cfg(not(feature = "parallel"))]
        drift.iter_mut().enumerate().for_each(compute);

        match self.config.noise {
            NoiseMode::Standard => self.noise.fill(replica, m, z),
            NoiseMode::Zero => z.fill([0.0, 0.0]),
        }
        let sigma = (2.0 * dt).sqrt();
        let mut finite = true;
        for i in 0..n {
            let x = path[m * n + i];
            let next = [x[0] + sigma * z[i][0] + drift[i][0] * dt, x[1] + sigma * z[i][1] + drift[i][1] * dt];
            finite &= geom::is_finite(next);
            path.push(next);
        }
        finite
    }

    fn finish(&self, replica: usize, path: &mut ReplicaPath) {
        let n = self.config.n_particles;
        let mut z = vec![[0.0; 2]; n];
        let mut drift = vec![[0.0; 2]; n];
        while path.status == ReplicaStatus::Ok && path.positions.len() / n <= self.config.n_steps {
            if !self.advance(replica, &mut path.positions, &mut z, &mut drift) {
                mark_blowup(path, n, self.config.n_steps);
            }
        }
    }
}

fn mark_blowup(path: &mut ReplicaPath, n: usize, n_steps: usize) {
    let step = path.positions.len() / n - 1;
    path.status = ReplicaStatus::BlownUp { step };
    path.positions.resize((n_steps + 1) * n, [f64::NAN, f64::NAN]);
}

fn stepper<'a>(config: &'a SimConfig, noise: &'a dyn NoiseSource) -> Stepper<'a> {
    Stepper {
        config,
        conv: HistoryConvolution::new(config),
        noise,
        #[cfg(feature = "parallel")]
        split_particles: config.n_replicas == 1,
    }
}

/// Advances every unfinished replica by one step.
///
/// Blown-up replicas are marked and NaN-filled; the first one is also
/// reported as an error.
pub fn step(ensemble: &mut TrajectoryEnsemble, noise: &dyn NoiseSource) -> Result<()> {
    let config = ensemble.config.clone();
    let n = config.n_particles;
    let st = stepper(&config, noise);
    let mut z = vec![[0.0; 2]; n];
    let mut drift = vec![[0.0; 2]; n];
    let mut first_error = None;
    for (r, path) in ensemble.replicas.iter_mut().enumerate() {
        if path.status != ReplicaStatus::Ok {
            continue;
        }
        let m = path.positions.len() / n - 1;
        if m >= config.n_steps {
            return domain(format!("replica {r} already holds all {} steps", config.n_steps));
        }
        if !st.advance(r, &mut path.positions, &mut z, &mut drift) {
            mark_blowup(path, n, config.n_steps);
            first_error.get_or_insert(Error::Blowup { replica: r, step: m + 1 });
        }
    }
    first_error.map_or(Ok(()), Err)
}

/// Full simulation with the default counter-based noise.
pub fn run(config: &SimConfig) -> Result<TrajectoryEnsemble> {
    run_with_noise(config, &ChaChaNoise::new(config.seed))
}

/// Full simulation with a caller-supplied noise source.
///
/// Replicas are independent; a blown-up replica is marked in its status and
/// does not stop the others.
pub fn run_with_noise(config: &SimConfig, noise: &dyn NoiseSource) -> Result<TrajectoryEnsemble> {
    let mut ensemble = init_ensemble(config)?;
    let st = stepper(config, noise);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ensemble.replicas.par_iter_mut().enumerate().for_each(|(r, path)| st.finish(r, path));
    }
    #[cfg(not(feature = "parallel"))]
    ensemble.replicas.iter_mut().enumerate().for_each(|(r, path)| st.finish(r, path));
    Ok(ensemble)
}

/// `(1/(N-1)) sum_{j != i} D^{i,j}_m` on replica `replica`.
pub fn history_drift(ensemble: &TrajectoryEnsemble, replica: usize, i: usize, m: usize) -> Result<Vec2> {
    check_index(ensemble, replica, i, m)?;
    Ok(HistoryConvolution::new(&ensemble.config).mean(ensemble.path(replica), i, m))
}

/// `D^{i,j}_m` on replica `replica`.
pub fn pair_drift(ensemble: &TrajectoryEnsemble, replica: usize, i: usize, j: usize, m: usize) -> Result<Vec2> {
    check_index(ensemble, replica, i, m)?;
    if j >= ensemble.n_particles() || j == i {
        return domain(format!("pair index j = {j} is invalid for i = {i}"));
    }
    Ok(HistoryConvolution::new(&ensemble.config).pair(ensemble.path(replica), i, j, m))
}

fn check_index(ensemble: &TrajectoryEnsemble, replica: usize, i: usize, m: usize) -> Result<()> {
    if replica >= ensemble.n_replicas() || i >= ensemble.n_particles() || m >= ensemble.rows(replica) {
        return domain(format!("index (replica {replica}, particle {i}, step {m}) is out of range"));
    }
    Ok(())
}

/// `int_0^t H^eps_u(R) du` for a displacement frozen in time.
///
/// Closed form `-R exp(-theta |R|^2 / (4t)) / (2 pi |R|^2)` when
/// `lambda = eps = 0`, adaptive quadrature otherwise.
pub fn frozen_drift_oracle(r: Vec2, t: f64, params: &KernelParams) -> Result<Vec2> {
    let r2 = geom::norm2(r);
    if !(r2 > 0.0) {
        return domain("frozen displacement must be nonzero");
    }
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("time must be positive, got {t}"));
    }
    if params.lambda == 0.0 && params.epsilon == 0.0 {
        let k = (-params.theta * r2 / (4.0 * t)).exp() / (2.0 * std::f64::consts::PI * r2);
        return Ok(geom::scale(r, -k));
    }
    let component = |c: usize| {
        integrate(
            |u| if u > 0.0 { kernels::smoothed_grad_unchecked(u, r, params)[c] } else { 0.0 },
            0.0,
            t,
            1e-10,
            1e-12,
        )
        .value
    };
    Ok([component(0), component(1)])
}

/// Memory horizon beyond which the envelope tail
/// `int_T^inf sqrt(theta) C0(0) / (4 pi u^{3/2}) du` falls below `tol`.
pub fn suggest_cutoff(params: &KernelParams, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let c0 = crate::constants::c0_const(0.0)?;
    Ok((2.0 * params.theta.sqrt() * c0 / (4.0 * std::f64::consts::PI * tol)).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SourceSpec;

    fn config(n: usize, steps: usize, replicas: usize) -> SimConfig {
        SimConfig {
            params: KernelParams::new(1.0, 0.0, 1.0, 0.05, 4.0).unwrap(),
            source: SourceSpec::zero(),
            n_particles: n,
            dt: 0.01,
            n_steps: steps,
            n_replicas: replicas,
            seed: 42,
            init: InitLaw::Gaussian { mean: [0.0, 0.0], variance: 1.0 },
            history_cutoff: None,
            noise: NoiseMode::Standard,
        }
    }

    #[test]
    fn zero_steps_equals_init() {
        let c = config(3, 0, 2);
        assert_eq!(run(&c).unwrap(), init_ensemble(&c).unwrap());
    }

    #[test]
    fn drift_is_zero_without_history() {
        let ens = run(&config(3, 4, 1)).unwrap();
        assert_eq!(history_drift(&ens, 0, 1, 0).unwrap(), [0.0, 0.0]);
        assert!(history_drift(&ens, 0, 3, 0).is_err());
        assert!(pair_drift(&ens, 0, 1, 1, 2).is_err());
    }

    #[test]
    fn stepping_matches_run() {
        let c = config(3, 5, 2);
        let mut ens = init_ensemble(&c).unwrap();
        let noise = ChaChaNoise::new(c.seed);
        for _ in 0..5 {
            step(&mut ens, &noise).unwrap();
        }
        assert_eq!(ens, run(&c).unwrap());
        assert!(step(&mut ens, &noise).is_err());
    }

    #[test]
    fn replica_prefix_is_stable() {
        let small = run(&config(3, 6, 2)).unwrap();
        let large = run(&config(3, 6, 4)).unwrap();
        for r in 0..2 {
            assert_eq!(small.path(r), large.path(r));
        }
    }

    #[test]
    fn cutoff_truncates_history() {
        let mut c = config(2, 30, 1);
        c.noise = NoiseMode::Zero;
        c.init = InitLaw::Explicit(vec![[0.0, 0.0], [0.5, 0.0]]);
        let full = run(&c).unwrap();
        let conv = HistoryConvolution::new(&c);
        c.history_cutoff = Some(0.1);
        let cut = HistoryConvolution::new(&c);
        let path = full.path(0);
        let d_full = conv.pair(path, 0, 1, 30);
        let d_cut = cut.pair(path, 0, 1, 30);
        let tail: Vec2 = (0..20).fold([0.0, 0.0], |mut acc, l| {
            conv.table.accumulate(30 - l, geom::sub(path[60], path[2 * l + 1]), &mut acc);
            acc
        });
        assert!((d_full[0] - d_cut[0] - tail[0] * c.dt).abs() < 1e-15);
    }

    #[test]
    fn blowup_is_marked() {
        struct Exploding;
        impl NoiseSource for Exploding {
            fn fill(&self, _replica: usize, step: usize, out: &mut [Vec2]) {
                out.fill(if step == 2 { [f64::INFINITY, 0.0] } else { [0.0, 0.0] });
            }
        }
        let c = config(2, 5, 1);
        let ens = run_with_noise(&c, &Exploding).unwrap();
        assert_eq!(ens.status(0), ReplicaStatus::BlownUp { step: 3 });
        assert!(matches!(ens.status(0), ReplicaStatus::BlownUp { .. }));
        assert!(matches!(ens.check_finite(), Err(Error::Blowup { replica: 0, .. })));
        assert_eq!(ens.path(0).len(), 6 * 2);
    }

    #[test]
    fn oracle_closed_form_values() {
        let p = KernelParams::new(1.0, 0.0, 1.0, 0.0, 4.0).unwrap();
        let d = frozen_drift_oracle([1.0, 0.0], 1.0, &p).unwrap();
        assert!((d[0] + (-0.25f64).exp() / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(d[1], 0.0);
        let far = frozen_drift_oracle([1.0, 0.0], 1e12, &p).unwrap();
        assert!((far[0] + 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-9);
        assert!(frozen_drift_oracle([0.0, 0.0], 1.0, &p).is_err());
    }

    #[test]
    fn oracle_quadrature_matches_closed_form() {
        let p = KernelParams::new(1.3, 0.0, 1.0, 0.0, 4.0).unwrap();
        let exact = frozen_drift_oracle([0.7, -0.4], 2.0, &p).unwrap();
        let mut q = p;
        q.lambda = 1e-300;
        let quad = frozen_drift_oracle([0.7, -0.4], 2.0, &q).unwrap();
        assert!(geom::norm(geom::sub(exact, quad)) < 1e-9);
    }

    #[test]
    fn cutoff_suggestion_bounds_tail() {
        let p = KernelParams::new(2.0, 0.0, 1.0, 0.1, 4.0).unwrap();
        let tc = suggest_cutoff(&p, 1e-3).unwrap();
        let c0 = crate::constants::c0_const(0.0).unwrap();
        let tail = 2.0 * p.theta.sqrt() * c0 / (4.0 * std::f64::consts::PI * tc.sqrt());
        assert!((tail - 1e-3).abs() < 1e-12);
    }
}
