//! Randomised checks of the interaction kernels.

use kspp_core::geom;
use kspp_core::kernels::{chemo_kernel, chemo_kernel_grad, grad_envelope, heat_kernel, smoothed_grad};
use kspp_core::quadrature::integrate_2d;
use kspp_core::KernelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const GRADIENT_TOL: f64 = 1e-5;
pub const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct KernelAudit {
    pub gradient_points: usize,
    pub worst_gradient_error: f64,
    pub envelope_samples: usize,
    pub envelope_violations: usize,
    pub worst_envelope_ratio: f64,
    pub worst_mass_error: f64,
    pub pass: bool,
}

fn params(theta: f64, lambda: f64, eps: f64) -> KernelParams {
    KernelParams::new(theta, lambda, 1.0, eps, 4.0).expect("sampled parameters are valid")
}

pub fn audit(points: usize, samples: usize, seed: u64) -> KernelAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst_gradient_error: f64 = 0.0;
    for _ in 0..points {
        let p = params(rng.random_range(0.2..5.0), rng.random_range(0.0..2.0), 0.0);
        let t = rng.random_range(0.05..3.0);
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let k = |y: [f64; 2]| chemo_kernel(t, y, &p).expect("t > 0");
        let fd = [
            (k([x[0] + h, x[1]]) - k([x[0] - h, x[1]])) / (2.0 * h),
            (k([x[0], x[1] + h]) - k([x[0], x[1] - h])) / (2.0 * h),
        ];
        let g = chemo_kernel_grad(t, x, &p).expect("t > 0");
        worst_gradient_error = worst_gradient_error.max(geom::norm(geom::sub(g, fd)) / geom::norm(g).max(1e-300));
    }

    let mut envelope_violations = 0;
    let mut worst_envelope_ratio: f64 = 0.0;
    for _ in 0..samples {
        let p = params(rng.random_range(-3.0f64..3.0).exp(), rng.random_range(0.0..1.0), rng.random_range(-8.0f64..0.0).exp());
        let t = rng.random_range(-8.0f64..2.0).exp();
        let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let alpha = rng.random_range(0.001..1.0);
        let ratio = geom::norm(smoothed_grad(t, x, &p).expect("t > 0")) / grad_envelope(t, x, alpha, &p).expect("t > 0");
        if ratio > 1.0 {
            envelope_violations += 1;
        }
        worst_envelope_ratio = worst_envelope_ratio.max(ratio);
    }

    let mut worst_mass_error: f64 = 0.0;
    for (theta, t) in [(1.0, 1.0), (0.1, 0.3), (8.0, 2.0)] {
        let p = params(theta, 0.0, 0.0);
        let half = 12.0 * (2.0 * t / theta).sqrt();
        let mass = integrate_2d(|x, y| heat_kernel(t, [x, y], &p).expect("t > 0"), (-half, half), (-half, half), 1e-10);
        worst_mass_error = worst_mass_error.max((mass - 1.0).abs());
    }

    let pass = worst_gradient_error < GRADIENT_TOL && envelope_violations == 0 && worst_mass_error < MASS_TOL;
    KernelAudit {
        gradient_points: points,
        worst_gradient_error,
        envelope_samples: samples,
        envelope_violations,
        worst_envelope_ratio,
        worst_mass_error,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_audit_passes() {
        let a = audit(20, 2000, 1);
        assert!(a.pass, "{a:?}");
        assert!(a.worst_envelope_ratio <= 1.0);
    }
}
