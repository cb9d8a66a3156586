//! Browser bindings for the demo page in `www/`.
//!
//! Each export returns a flat `Float64Array`. The `*_impl` functions hold the
//! logic so it can be tested without a JavaScript host.

use kspp_core::constants::{chi_star, kappa, ThresholdSearch};
use kspp_core::funineq::random_case;
use kspp_core::simulator::{run, InitLaw, NoiseMode, SimConfig};
use kspp_core::{KernelParams, SourceSpec};
use wasm_bindgen::prelude::*;

const DEMO_SEARCH: ThresholdSearch = ThresholdSearch { grid: 24, rounds: 3, margin: 1e-4 };

/// `[theta_0, chi*_0, theta_1, chi*_1, ...]` on a log grid of `theta`.
pub fn threshold_curve_impl(p: f64, log10_min: f64, log10_max: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 || !(log10_min < log10_max) {
        return Err("need at least two points and an increasing range".into());
    }
    let mut out = Vec::with_capacity(2 * points);
    for k in 0..points {
        let theta = 10f64.powf(log10_min + (log10_max - log10_min) * k as f64 / (points - 1) as f64);
        let res = chi_star(theta, p, &DEMO_SEARCH).map_err(|e| e.to_string())?;
        out.extend([theta, res.chi_star]);
    }
    Ok(out)
}

/// Positions of replica 0 as `[x, y]` pairs, time-major: row `m` holds the `n` particles at step `m`.
pub fn simulate_trajectories_impl(
    n: usize,
    steps: usize,
    dt: f64,
    chi: f64,
    theta: f64,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let config = SimConfig {
        params: KernelParams::new(theta, 0.0, chi, epsilon, 4.0).map_err(|e| e.to_string())?,
        source: SourceSpec::zero(),
        n_particles: n,
        dt,
        n_steps: steps,
        n_replicas: 1,
        seed,
        init: InitLaw::Gaussian { mean: [0.0, 0.0], variance: 1.0 },
        history_cutoff: None,
        noise: NoiseMode::Standard,
    };
    let ens = run(&config).map_err(|e| e.to_string())?;
    Ok(ens.path(0).iter().flat_map(|x| [x[0], x[1]]).collect())
}

/// `[kappa(a, b), ratio_0, ratio_1, ...]` for random step functions at fixed exponents,
/// where each ratio is the left side over the right side and never exceeds 1.
pub fn inequality_ratios_impl(a: f64, b: f64, cases: usize, seed: u64) -> Result<Vec<f64>, String> {
    let k = kappa(a, b).map_err(|e| e.to_string())?;
    let mut out = vec![k];
    for i in 0..cases {
        let f = random_case(seed, i as u64).f;
        let rep = kspp_core::funineq::evaluate_inequality(&f, a, b).map_err(|e| e.to_string())?;
        if !rep.divergent {
            out.push(rep.ratio);
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn threshold_curve(p: f64, log10_min: f64, log10_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    threshold_curve_impl(p, log10_min, log10_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_trajectories(
    n: usize,
    steps: usize,
    dt: f64,
    chi: f64,
    theta: f64,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    simulate_trajectories_impl(n, steps, dt, chi, theta, epsilon, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn inequality_ratios(a: f64, b: f64, cases: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    inequality_ratios_impl(a, b, cases, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_is_decreasing_in_theta() {
        let c = threshold_curve_impl(3.31, -1.0, 1.0, 3).unwrap();
        assert_eq!(c.len(), 6);
        assert!(c[1] > c[3] && c[3] > c[5]);
        assert!(threshold_curve_impl(3.31, 1.0, 1.0, 3).is_err());
    }

    #[test]
    fn trajectories_have_one_pair_per_particle_and_step() {
        let xs = simulate_trajectories_impl(3, 10, 0.01, 0.5, 1.0, 0.05, 1).unwrap();
        assert_eq!(xs.len(), 2 * 3 * 11);
        assert!(simulate_trajectories_impl(1, 10, 0.01, 0.5, 1.0, 0.05, 1).is_err());
    }

    #[test]
    fn ratios_stay_below_one() {
        let r = inequality_ratios_impl(0.5, 0.63, 200, 3).unwrap();
        assert!((r[0] - 1.410798).abs() < 1e-6);
        assert!(r[1..].iter().all(|&x| x <= 1.0 + 1e-12));
    }
}
