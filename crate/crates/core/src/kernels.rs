//! Closed-form kernels of the model.
//!
//! With `g_t(x) = theta/(4 pi t) exp(-theta |x|^2 / (4t))` the heat kernel,
//! the chemo-attractant kernel is `K_t = exp(-lambda t / theta) g_t / theta`
//! and its gradient is
//!
//! ```text
//! grad K_t(x) = -theta/(8 pi t^2) exp(-lambda t/theta) exp(-theta |x|^2/(4t)) x.
//! ```
//!
//! The particle system uses the smoothed kernel `H_t = t^2/(t+eps)^2 grad K_t`,
//! which extends continuously by zero at `t = 0` when `eps > 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::c0_const;
use crate::error::{domain, Error, Result};
use crate::geom::{self, Vec2};
use crate::quadrature;

/// Exponent arguments beyond this flush the Gaussian factor to zero.
pub const EXP_CLAMP: f64 = 700.0;

#[inline]
fn gaussian_factor(arg: f64) -> f64 {
    if arg > EXP_CLAMP {
        0.0
    } else {
        (-arg).exp()
    }
}

/// Physical and regularisation parameters of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Ratio of the diffusion time scales.
    pub theta: f64,
    /// Death rate of the chemo-attractant.
    pub lambda: f64,
    /// Chemotactic sensitivity.
    pub chi: f64,
    /// Smoothing parameter; zero means unsmoothed.
    pub epsilon: f64,
    /// Integrability exponent of the initial concentration.
    pub p: f64,
}

impl KernelParams {
    pub fn new(theta: f64, lambda: f64, chi: f64, epsilon: f64, p: f64) -> Result<Self> {
        let params = Self { theta, lambda, chi, epsilon, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return domain(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return domain(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        // chi = 0 is admitted: it switches the interaction off for reference runs.
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return domain(format!("chi must be nonnegative, got {}", self.chi));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return domain(format!("epsilon must be nonnegative, got {}", self.epsilon));
        }
        if !(self.p > 2.0) {
            return domain(format!("p must exceed 2, got {}", self.p));
        }
        Ok(())
    }

    #[inline]
    fn decay(&self, t: f64) -> f64 {
        (-self.lambda * t / self.theta).exp()
    }
}

fn require_positive_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        domain(format!("time must be positive, got {t}"))
    }
}

/// Heat kernel `g^theta_t(x)`.
pub fn heat_kernel(t: f64, x: Vec2, params: &KernelParams) -> Result<f64> {
    require_positive_time(t)?;
    let th = params.theta;
    Ok(th / (4.0 * PI * t) * gaussian_factor(th * geom::norm2(x) / (4.0 * t)))
}

/// Chemo-attractant kernel `K^{theta,lambda}_t(x)`.
pub fn chemo_kernel(t: f64, x: Vec2, params: &KernelParams) -> Result<f64> {
    Ok(params.decay(t) * heat_kernel(t, x, params)? / params.theta)
}

/// Exact gradient of [`chemo_kernel`] in `x`.
pub fn chemo_kernel_grad(t: f64, x: Vec2, params: &KernelParams) -> Result<Vec2> {
    require_positive_time(t)?;
    let th = params.theta;
    let k = th / (8.0 * PI * t * t) * params.decay(t) * gaussian_factor(th * geom::norm2(x) / (4.0 * t));
    Ok(geom::scale(x, -k))
}

/// Smoothed interaction kernel `H^eps_t(x) = t^2/(t+eps)^2 grad K_t(x)`.
///
/// Defined as zero at `t = 0` when `eps > 0`.
pub fn smoothed_grad(t: f64, x: Vec2, params: &KernelParams) -> Result<Vec2> {
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    if t == 0.0 {
        return if params.epsilon > 0.0 {
            Ok([0.0, 0.0])
        } else {
            domain("smoothed kernel at t = 0 needs epsilon > 0")
        };
    }
    Ok(smoothed_grad_unchecked(t, x, params))
}

#[inline]
pub(crate) fn smoothed_grad_unchecked(t: f64, x: Vec2, params: &KernelParams) -> Vec2 {
    let th = params.theta;
    let te = t + params.epsilon;
    let k = th / (8.0 * PI * te * te) * params.decay(t) * gaussian_factor(th * geom::norm2(x) / (4.0 * t));
    geom::scale(x, -k)
}

/// Smoothed kernel tabulated on the lags `u_k = k dt`, `k = 1..=n_lags`.
///
/// The simulator and the estimators evaluate `H` only on grid lags, so the
/// time-dependent factors are computed once per run.
#[derive(Debug, Clone)]
pub struct LagTable {
    dt: f64,
    // coef[k] = theta / (8 pi (u_k + eps)^2) * exp(-lambda u_k / theta); index 0 unused.
    coef: Vec<f64>,
    // spread[k] = theta / (4 u_k)
    spread: Vec<f64>,
}

impl LagTable {
    pub fn new(params: &KernelParams, dt: f64, n_lags: usize) -> Self {
        let th = params.theta;
        let mut coef = vec![0.0; n_lags + 1];
        let mut spread = vec![0.0; n_lags + 1];
        for k in 1..=n_lags {
            let u = k as f64 * dt;
            let ue = u + params.epsilon;
            coef[k] = th / (8.0 * PI * ue * ue) * params.decay(u);
            spread[k] = th / (4.0 * u);
        }
        Self { dt, coef, spread }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_lags(&self) -> usize {
        self.coef.len() - 1
    }

    /// `H^eps_{k dt}(x)`; lag zero evaluates to the zero vector.
    #[inline]
    pub fn eval(&self, lag: usize, x: Vec2) -> Vec2 {
        if lag == 0 {
            return [0.0, 0.0];
        }
        let k = self.coef[lag] * gaussian_factor(self.spread[lag] * geom::norm2(x));
        [-k * x[0], -k * x[1]]
    }

    /// Adds `H^eps_{k dt}(x)` into `acc`.
    #[inline]
    pub(crate) fn accumulate(&self, lag: usize, x: Vec2, acc: &mut Vec2) {
        let arg = self.spread[lag] * (x[0] * x[0] + x[1] * x[1]);
        if arg <= EXP_CLAMP {
            let k = self.coef[lag] * (-arg).exp();
            acc[0] -= k * x[0];
            acc[1] -= k * x[1];
        }
    }
}

/// Pointwise envelope of the smoothed kernel,
/// `sqrt(theta) C0(4 alpha/theta) / (4 pi (t + eps + alpha |x|^2)^{3/2})`.
#[derive(Debug, Clone, Copy)]
pub struct GradEnvelope {
    alpha: f64,
    prefactor: f64,
}

impl GradEnvelope {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        if !(theta > 0.0) {
            return domain(format!("theta must be positive, got {theta}"));
        }
        let c0 = c0_const(4.0 * alpha / theta)?;
        Ok(Self { alpha, prefactor: theta.sqrt() * c0 / (4.0 * PI) })
    }

    /// `sqrt(theta) C0(4 alpha / theta) / (4 pi)`.
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    #[inline]
    pub fn eval(&self, t: f64, x: Vec2, epsilon: f64) -> f64 {
        self.prefactor / (t + epsilon + self.alpha * geom::norm2(x)).powf(1.5)
    }
}

/// Envelope bound for `|H^eps_t(x)|` with free weight `alpha`.
pub fn grad_envelope(t: f64, x: Vec2, alpha: f64, params: &KernelParams) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    Ok(GradEnvelope::new(alpha, params.theta)?.eval(t, x, params.epsilon))
}

/// One Gaussian bump `weight * N(center, variance I)` of the initial concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub center: Vec2,
    pub variance: f64,
}

/// Initial chemo-attractant concentration as a finite Gaussian mixture.
/// The empty mixture is the zero concentration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub components: Vec<GaussianComponent>,
}

impl SourceSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let spec = Self { components };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::Config(format!("source component {i}: weight must be positive")));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::Config(format!("source component {i}: variance must be positive")));
            }
            if !geom::is_finite(c.center) {
                return Err(Error::Config(format!("source component {i}: center must be finite")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    /// `c0(x)`.
    pub fn value(&self, x: Vec2) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let d2 = geom::norm2(geom::sub(x, c.center));
                c.weight / (2.0 * PI * c.variance) * (-d2 / (2.0 * c.variance)).exp()
            })
            .sum()
    }

    /// `||c0||_{L^p}` by iterated quadrature over a box holding every component.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for c in &self.components {
            let r = 14.0 * c.variance.sqrt();
            x0 = x0.min(c.center[0] - r);
            x1 = x1.max(c.center[0] + r);
            y0 = y0.min(c.center[1] - r);
            y1 = y1.max(c.center[1] + r);
        }
        let peak: f64 = self.components.iter().map(|c| c.weight / (2.0 * PI * c.variance)).sum();
        let integral = quadrature::integrate_2d(
            |x, y| self.value([x, y]).powf(p),
            (x0, x1),
            (y0, y1),
            1e-12 * peak.powf(p).max(f64::MIN_POSITIVE),
        );
        integral.powf(1.0 / p)
    }
}

/// Background field `b_t = exp(-lambda t/theta) (g_t * c0)` and its gradient.
///
/// Each mixture component convolves to a Gaussian of variance
/// `variance + 2t/theta`.
pub fn background_field(t: f64, x: Vec2, source: &SourceSpec, params: &KernelParams) -> Result<(f64, Vec2)> {
    require_positive_time(t)?;
    Ok(background_field_unchecked(t, x, source, params))
}

pub(crate) fn background_field_unchecked(t: f64, x: Vec2, source: &SourceSpec, params: &KernelParams) -> (f64, Vec2) {
    if source.is_zero() {
        return (0.0, [0.0, 0.0]);
    }
    let decay = params.decay(t);
    let spread = 2.0 * t / params.theta;
    let mut b = 0.0;
    let mut grad = [0.0, 0.0];
    for c in &source.components {
        let s2 = c.variance + spread;
        let d = geom::sub(x, c.center);
        let v = decay * c.weight / (2.0 * PI * s2) * gaussian_factor(geom::norm2(d) / (2.0 * s2));
        b += v;
        grad[0] -= v * d[0] / s2;
        grad[1] -= v * d[1] / s2;
    }
    (b, grad)
}

/// `||grad g^theta_t||_{L^q}` by radial quadrature.
pub fn heat_grad_lq_norm(t: f64, q: f64, theta: f64) -> Result<f64> {
    require_positive_time(t)?;
    if !(q >= 1.0) {
        return domain(format!("q must be at least 1, got {q}"));
    }
    let amp = theta * theta / (8.0 * PI * t * t);
    let rate = theta / (4.0 * t);
    let r_max = (80.0 / (q * rate)).sqrt();
    let integrand = |r: f64| 2.0 * PI * r * (amp * r * (-rate * r * r).exp()).powf(q);
    let peak = integrand((1.0 / (2.0 * rate)).sqrt()).max(f64::MIN_POSITIVE);
    let norm_q = quadrature::integrate(integrand, 0.0, r_max, 1e-14 * peak * r_max, 1e-12).value;
    Ok(norm_q.powf(1.0 / q))
}

/// Constant `A(theta, p)` with `sup |grad b_t| <= A ||c0||_p / t^{1/2 + 1/p}`,
/// taken as `||grad g^theta_1||_{L^{p'}}`.
pub fn background_grad_constant(theta: f64, p: f64) -> Result<f64> {
    if !(p > 2.0) {
        return domain(format!("p must exceed 2, got {p}"));
    }
    heat_grad_lq_norm(1.0, p / (p - 1.0), theta)
}
