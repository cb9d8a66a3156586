use serde::{Deserialize, Serialize};

use super::noise::{CounterRng, INIT_TAG};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::kernels::{KernelParams, SourceSpec};

/// Law of the initial positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitLaw {
    /// Every particle starts at the same point.
    Point(Vec2),
    /// Independent `N(mean, variance I)` draws.
    Gaussian { mean: Vec2, variance: f64 },
    /// Independent uniform draws on a disk.
    Disk { center: Vec2, radius: f64 },
    /// Particle `2k` is drawn from `N(0, variance I)` and particle `2k+1`
    /// is its reflection through the origin. Needs an even particle count.
    Mirrored { variance: f64 },
    /// Fixed positions, one per particle. Not exchangeable in general.
    Explicit(Vec<Vec2>),
}

impl InitLaw {
    fn validate(&self, n_particles: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        match self {
            InitLaw::Point(x) if !crate::geom::is_finite(*x) => bad("init point must be finite"),
            InitLaw::Gaussian { mean, variance } if !(crate::geom::is_finite(*mean) && *variance > 0.0 && variance.is_finite()) => {
                bad("gaussian init needs a finite mean and positive variance")
            }
            InitLaw::Disk { center, radius } if !(crate::geom::is_finite(*center) && *radius > 0.0 && radius.is_finite()) => {
                bad("disk init needs a finite center and positive radius")
            }
            InitLaw::Mirrored { variance } if !(*variance > 0.0 && variance.is_finite()) => bad("mirrored init needs a positive variance"),
            InitLaw::Mirrored { .. } if n_particles % 2 != 0 => bad("mirrored init needs an even particle count"),
            InitLaw::Explicit(xs) if xs.len() != n_particles => bad("explicit init needs one position per particle"),
            InitLaw::Explicit(xs) if !xs.iter().all(|x| crate::geom::is_finite(*x)) => bad("explicit init positions must be finite"),
            _ => Ok(()),
        }
    }

    /// Step-0 positions of one replica.
    pub fn sample(&self, seed: u64, replica: usize, n_particles: usize) -> Vec<Vec2> {
        let rng = CounterRng::new(seed, INIT_TAG);
        let normal = |i: usize| rng.normal_pair(replica, i, 0);
        match self {
            InitLaw::Point(x) => vec![*x; n_particles],
            InitLaw::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                (0..n_particles).map(|i| {
                    let z = normal(i);
                    [mean[0] + sd * z[0], mean[1] + sd * z[1]]
                })
                .collect()
            }
            InitLaw::Disk { center, radius } => (0..n_particles)
                .map(|i| {
                    let (u1, u2) = rng.uniform_pair(replica, i, 0);
                    let r = radius * u1.sqrt();
                    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
                    [center[0] + r * c, center[1] + r * s]
                })
                .collect(),
            InitLaw::Mirrored { variance } => {
                let sd = variance.sqrt();
                (0..n_particles)
                    .map(|i| {
                        let z = normal(i - i % 2);
                        let sign = if i % 2 == 0 { sd } else { -sd };
                        [sign * z[0], sign * z[1]]
                    })
                    .collect()
            }
            InitLaw::Explicit(xs) => xs.clone(),
        }
    }
}

/// Whether the Brownian term is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseMode {
    #[default]
    Standard,
    /// Deterministic dynamics, for oracle comparisons.
    Zero,
}

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: KernelParams,
    pub source: SourceSpec,
    pub n_particles: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub n_replicas: usize,
    pub seed: u64,
    pub init: InitLaw,
    /// Memory horizon of the drift; `None` keeps the full history.
    pub history_cutoff: Option<f64>,
    pub noise: NoiseMode,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.source.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.params.epsilon > 0.0) {
            return Err(Error::Config("the particle system needs epsilon > 0".into()));
        }
        if self.n_particles < 2 {
            return Err(Error::Config("need at least two particles".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_replicas < 1 {
            return Err(Error::Config("need at least one replica".into()));
        }
        if let Some(tc) = self.history_cutoff {
            if !(tc > 0.0) {
                return Err(Error::Config(format!("history cutoff must be positive, got {tc}")));
            }
        }
        self.init.validate(self.n_particles)
    }

    /// Final time `n_steps * dt`.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Largest history lag kept by the drift.
    pub fn max_lag(&self) -> usize {
        match self.history_cutoff {
            Some(tc) => ((tc / self.dt) * (1.0 + 1e-12)).floor() as usize,
            None => self.n_steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SimConfig {
        SimConfig {
            params: KernelParams::new(1.0, 0.0, 1.0, 0.1, 4.0).unwrap(),
            source: SourceSpec::zero(),
            n_particles: 4,
            dt: 0.01,
            n_steps: 10,
            n_replicas: 2,
            seed: 1,
            init: InitLaw::Gaussian { mean: [0.0, 0.0], variance: 1.0 },
            history_cutoff: None,
            noise: NoiseMode::Standard,
        }
    }

    #[test]
    fn validation() {
        assert!(base().validate().is_ok());
        let mut c = base();
        c.params.epsilon = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base();
        c.n_particles = 1;
        assert!(c.validate().is_err());
        let mut c = base();
        c.init = InitLaw::Mirrored { variance: 1.0 };
        c.n_particles = 3;
        assert!(c.validate().is_err());
        let mut c = base();
        c.init = InitLaw::Explicit(vec![[0.0, 0.0]; 3]);
        assert!(c.validate().is_err());
        let mut c = base();
        c.history_cutoff = Some(0.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn max_lag_rounds_down() {
        let mut c = base();
        assert_eq!(c.max_lag(), 10);
        c.history_cutoff = Some(0.05);
        assert_eq!(c.max_lag(), 5);
    }

    #[test]
    fn init_laws() {
        assert!(InitLaw::Point([1.0, 2.0]).sample(0, 0, 3).iter().all(|x| *x == [1.0, 2.0]));
        let m = InitLaw::Mirrored { variance: 2.0 }.sample(5, 1, 2);
        assert_eq!(m[1], [-m[0][0], -m[0][1]]);
        let d = InitLaw::Disk { center: [1.0, 0.0], radius: 0.5 }.sample(5, 0, 200);
        assert!(d.iter().all(|x| crate::geom::norm(crate::geom::sub(*x, [1.0, 0.0])) <= 0.5));
    }

    #[test]
    fn gaussian_init_mean() {
        let n = 100_000;
        let xs = InitLaw::Gaussian { mean: [0.0, 0.0], variance: 1.0 }.sample(3, 0, n);
        for c in 0..2 {
            let mean = xs.iter().map(|x| x[c]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        }
    }
}
