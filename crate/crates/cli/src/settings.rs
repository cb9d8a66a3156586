//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every key that a command reads
//! is recorded with its resolved value, defaults included, so artifacts can
//! embed exactly what was run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use kspp_core::estimators::{Bump, EstimatorParams, PairSelection, PathFunctional};
use kspp_core::kernels::GaussianComponent;
use kspp_core::simulator::{InitLaw, NoiseMode, SimConfig};
use kspp_core::{KernelParams, SourceSpec};

use crate::Failure;

const KNOWN_KEYS: &[&str] = &[
    "theta", "lambda", "chi", "epsilon", "p", "n_particles", "dt", "n_steps", "n_replicas", "seed", "init", "init_x",
    "init_y", "init_variance", "init_radius", "init_positions", "history_cutoff", "noise", "source", "gamma", "alpha",
    "delta", "horizon", "pairs", "slack", "bump_x", "bump_y", "bump_radius", "s", "t", "functional", "window_tau",
    "window_coordinate", "window_lower", "window_upper",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    raw: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut raw = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("line {}: expected `key = value`", k + 1)))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Failure::Config(format!("line {}: unknown key `{key}`", k + 1)));
            }
            if raw.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Failure::Config(format!("line {}: duplicate key `{key}`", k + 1)));
            }
        }
        Ok(Self { raw, resolved: BTreeMap::new() })
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.raw.insert(key.to_string(), value.to_string());
    }

    /// Keys read so far with their resolved values.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    fn get<T: FromStr + Display>(&mut self, key: &str, default: T) -> Result<T, Failure> {
        let value = match self.raw.get(key) {
            Some(s) => s.parse().map_err(|_| Failure::Config(format!("`{key}`: cannot parse `{s}`")))?,
            None => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn get_str(&mut self, key: &str, default: &str) -> String {
        let value = self.raw.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.resolved.insert(key.to_string(), value.clone());
        value
    }

    pub fn sim_config(&mut self) -> Result<SimConfig, Failure> {
        let params = KernelParams {
            theta: self.get("theta", 1.0)?,
            lambda: self.get("lambda", 0.0)?,
            chi: self.get("chi", 1.0)?,
            epsilon: self.get("epsilon", 0.05)?,
            p: self.get("p", 4.0)?,
        };
        let n_particles = self.get("n_particles", 8usize)?;
        let init = self.init_law()?;
        let history_cutoff = match self.get_str("history_cutoff", "none").as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| Failure::Config(format!("`history_cutoff`: cannot parse `{s}`")))?),
        };
        let noise = match self.get_str("noise", "standard").as_str() {
            "standard" => NoiseMode::Standard,
            "zero" => NoiseMode::Zero,
            s => return Err(Failure::Config(format!("`noise`: expected standard or zero, got `{s}`"))),
        };
        let config = SimConfig {
            params,
            source: self.source()?,
            n_particles,
            dt: self.get("dt", 0.01)?,
            n_steps: self.get("n_steps", 100usize)?,
            n_replicas: self.get("n_replicas", 1usize)?,
            seed: self.get("seed", 0u64)?,
            init,
            history_cutoff,
            noise,
        };
        config.validate().map_err(Failure::from)?;
        Ok(config)
    }

    fn init_law(&mut self) -> Result<InitLaw, Failure> {
        let kind = self.get_str("init", "gaussian");
        let center = |s: &mut Self| -> Result<[f64; 2], Failure> { Ok([s.get("init_x", 0.0)?, s.get("init_y", 0.0)?]) };
        Ok(match kind.as_str() {
            "point" => InitLaw::Point(center(self)?),
            "gaussian" => InitLaw::Gaussian { mean: center(self)?, variance: self.get("init_variance", 1.0)? },
            "disk" => InitLaw::Disk { center: center(self)?, radius: self.get("init_radius", 1.0)? },
            "mirrored" => InitLaw::Mirrored { variance: self.get("init_variance", 1.0)? },
            "explicit" => InitLaw::Explicit(parse_points(&self.get_str("init_positions", ""))?),
            s => return Err(Failure::Config(format!("`init`: unknown law `{s}`"))),
        })
    }

    /// `source = weight x y variance; weight x y variance; ...`, or `none`.
    fn source(&mut self) -> Result<SourceSpec, Failure> {
        let text = self.get_str("source", "none");
        if text == "none" {
            return Ok(SourceSpec::zero());
        }
        let components = text
            .split(';')
            .map(|part| {
                let v = parse_floats(part)?;
                if v.len() != 4 {
                    return Err(Failure::Config(format!("`source`: expected `weight x y variance`, got `{}`", part.trim())));
                }
                Ok(GaussianComponent { weight: v[0], center: [v[1], v[2]], variance: v[3] })
            })
            .collect::<Result<Vec<_>, _>>()?;
        SourceSpec::new(components).map_err(Failure::from)
    }

    pub fn estimator(&mut self, config: &SimConfig) -> Result<EstimatorParams, Failure> {
        let gamma = self.get("gamma", 1.62)?;
        let alpha = self.get("alpha", 0.045)?;
        let delta = self.get("delta", 0.0)?;
        let horizon = self.get("horizon", config.horizon())?;
        let pairs = match self.get_str("pairs", "all").as_str() {
            "all" => PairSelection::AllOrdered,
            "single" => PairSelection::Single,
            s => return Err(Failure::Config(format!("`pairs`: expected all or single, got `{s}`"))),
        };
        let ep = EstimatorParams::new(gamma, alpha, delta, horizon).map_err(Failure::from)?;
        ep.horizon_steps(config).map_err(Failure::from)?;
        Ok(ep.with_pairs(pairs))
    }

    pub fn slack(&mut self) -> Result<f64, Failure> {
        self.get("slack", kspp_core::estimators::DEFAULT_SLACK)
    }

    /// Test function, functional and window `[s, t]` of the martingale residual.
    pub fn martingale(&mut self, config: &SimConfig) -> Result<(Bump, PathFunctional, f64, f64), Failure> {
        let bump = Bump::new([self.get("bump_x", 0.0)?, self.get("bump_y", 0.0)?], self.get("bump_radius", 2.0)?)
            .map_err(Failure::from)?;
        let t_end = config.horizon();
        let s = self.get("s", 0.4 * t_end)?;
        let t = self.get("t", t_end)?;
        let functional = match self.get_str("functional", "constant").as_str() {
            "constant" => PathFunctional::Constant,
            "window" => PathFunctional::Window {
                tau: self.get("window_tau", s)?,
                coordinate: self.get("window_coordinate", 0usize)?,
                lower: self.get("window_lower", -1.0)?,
                upper: self.get("window_upper", 1.0)?,
            },
            other => return Err(Failure::Config(format!("`functional`: expected constant or window, got `{other}`"))),
        };
        Ok((bump, functional, s, t))
    }
}

fn parse_floats(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Failure::Config(format!("cannot parse `{s}` as a number"))))
        .collect()
}

/// `x y; x y; ...`
fn parse_points(text: &str) -> Result<Vec<[f64; 2]>, Failure> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|part| match parse_floats(part)?.as_slice() {
            [x, y] => Ok([*x, *y]),
            _ => Err(Failure::Config(format!("`init_positions`: expected `x y`, got `{}`", part.trim()))),
        })
        .collect()
}

/// Comma-separated list of numbers on the command line.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| Failure::Config(format!("cannot parse list entry `{s}`"))))
        .collect()
}
