//! Structural constants and the admissible sensitivity threshold.
//!
//! For `gamma in (3/2, 2)` and `alpha in (0, 1/(4(gamma-1)))`:
//!
//! ```text
//! C0(beta) = sup_{u >= 0} sqrt(u) (1 + beta u)^{3/2} exp(-u)
//! C1       = (gamma-1) (1 - 4 alpha (gamma-1))
//! C2       = sqrt(alpha theta) (gamma-1) / (2 pi) * C0(4 alpha/theta) * kappa(1/2, gamma-1) * kappa(gamma-3/2, gamma-1)
//! C3       = sqrt(theta) C0(4 alpha/theta) kappa(1/2, gamma-1) / (4 pi sqrt(alpha) (4 - 2 gamma))
//! ```
//!
//! A sensitivity `chi` is admissible when
//! `chi C2 + (chi C3)^{2(gamma-1)} < C1`; the threshold is the supremum of the
//! admissible `chi` over all `(gamma, alpha)` compatible with `p`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::{bisect_increasing, golden_max};

const C0_GRID_POINTS: usize = 2048;
const C0_U_MIN: f64 = 1e-6;
const C0_U_MAX: f64 = 50.0;

/// `C0(beta) = sup_{u >= 0} sqrt(u) (1 + beta u)^{3/2} e^{-u}`.
///
/// Log-spaced scan of `u` followed by golden-section polishing in the
/// best bracket.
pub fn c0_const(beta: f64) -> Result<f64> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return domain(format!("C0 needs beta >= 0, got {beta}"));
    }
    let h = |u: f64| u.sqrt() * (1.0 + beta * u).powf(1.5) * (-u).exp();
    let ratio = (C0_U_MAX / C0_U_MIN).ln() / (C0_GRID_POINTS - 1) as f64;
    let node = |k: usize| C0_U_MIN * (ratio * k as f64).exp();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..C0_GRID_POINTS {
        let v = h(node(k));
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    let lo = if best == 0 { 0.0 } else { node(best - 1) };
    let hi = node((best + 1).min(C0_GRID_POINTS - 1));
    let (_, polished) = golden_max(h, lo, hi, 1e-13);
    Ok(polished.max(best_val))
}

/// Optimal constant of the weighted functional inequality,
/// `kappa(a, b) = (a+1)/a * (b/(b+1))^{a/b}` for `0 < a < b`.
pub fn kappa(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > a && b.is_finite()) {
        return domain(format!("kappa needs 0 < a < b, got a={a}, b={b}"));
    }
    Ok((a + 1.0) / a * (b / (b + 1.0)).powf(a / b))
}

/// Upper end `(2p+2)/(p+2)` of the admissible `gamma` range for a given `p`.
pub fn gamma_upper(p: f64) -> f64 {
    if p.is_infinite() {
        2.0
    } else {
        ((2.0 * p + 2.0) / (p + 2.0)).min(2.0)
    }
}

/// Exponent pair `(gamma, alpha)` together with the model parameters `theta`, `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub gamma: f64,
    pub alpha: f64,
    pub theta: f64,
    pub p: f64,
}

impl StructuralParams {
    /// Checks `3/2 < gamma < min(2, (2p+2)/(p+2))`, `0 < alpha < 1/(4(gamma-1))`,
    /// `theta > 0` and `p > 2`.
    pub fn new(gamma: f64, alpha: f64, theta: f64, p: f64) -> Result<Self> {
        if !(p > 2.0) {
            return domain(format!("p must exceed 2, got {p}"));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return domain(format!("theta must be positive, got {theta}"));
        }
        if !(gamma > 1.5 && gamma < gamma_upper(p)) {
            return domain(format!("gamma must lie in (3/2, {}), got {gamma}", gamma_upper(p)));
        }
        if !(alpha > 0.0 && alpha < alpha_upper(gamma)) {
            return domain(format!("alpha must lie in (0, {}), got {alpha}", alpha_upper(gamma)));
        }
        Ok(Self { gamma, alpha, theta, p })
    }

    /// `r_p = 1 - (gamma-1)(1 + 2/p)`.
    pub fn r_p(&self) -> f64 {
        1.0 - (self.gamma - 1.0) * (1.0 + 2.0 / self.p)
    }
}

/// `1/(4(gamma-1))`, the largest `alpha` keeping `C1 > 0`.
pub fn alpha_upper(gamma: f64) -> f64 {
    1.0 / (4.0 * (gamma - 1.0))
}

/// Values of the structural constants at one `(theta, alpha, gamma, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    /// `C0(4 alpha / theta)`.
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub r_p: f64,
    /// `kappa(1/2, gamma-1)`.
    pub kappa_half: f64,
    /// `kappa(gamma-3/2, gamma-1)`.
    pub kappa_grad: f64,
}

impl StructuralConstants {
    /// Left side `chi C2 + (chi C3)^{2(gamma-1)}` of the admissibility condition.
    pub fn admissibility_lhs(&self, chi: f64, gamma: f64) -> f64 {
        chi * self.c2 + (chi * self.c3).powf(2.0 * (gamma - 1.0))
    }
}

/// `C1(alpha, gamma)`.
pub fn c1_const(alpha: f64, gamma: f64) -> f64 {
    (gamma - 1.0) * (1.0 - 4.0 * alpha * (gamma - 1.0))
}

pub fn structural_constants(sp: &StructuralParams) -> Result<StructuralConstants> {
    let StructuralParams { gamma, alpha, theta, .. } = *sp;
    let c0 = c0_const(4.0 * alpha / theta)?;
    let kappa_half = kappa(0.5, gamma - 1.0)?;
    let kappa_grad = kappa(gamma - 1.5, gamma - 1.0)?;
    let c2 = (alpha * theta).sqrt() * (gamma - 1.0) / (2.0 * PI) * c0 * kappa_half * kappa_grad;
    let c3 = theta.sqrt() * c0 * kappa_half / (4.0 * PI * alpha.sqrt() * (4.0 - 2.0 * gamma));
    Ok(StructuralConstants { c0, c1: c1_const(alpha, gamma), c2, c3, r_p: sp.r_p(), kappa_half, kappa_grad })
}

/// Whether `chi C2 + (chi C3)^{2(gamma-1)} < C1` holds strictly.
pub fn admissible(chi: f64, sp: &StructuralParams) -> Result<bool> {
    let k = structural_constants(sp)?;
    Ok(k.admissibility_lhs(chi, sp.gamma) < k.c1)
}

/// Relative tolerance of [`chi_for`].
pub const CHI_REL_TOL: f64 = 1e-12;

/// `chi_{theta, alpha, gamma}`: the root of `chi C2 + (chi C3)^{2(gamma-1)} = C1`.
pub fn chi_for(sp: &StructuralParams) -> Result<f64> {
    let k = structural_constants(sp)?;
    chi_from_constants(&k, sp.gamma)
}

fn chi_from_constants(k: &StructuralConstants, gamma: f64) -> Result<f64> {
    if !(k.c1 > 0.0) {
        return domain(format!("C1 must be positive, got {}", k.c1));
    }
    let f = |chi: f64| k.admissibility_lhs(chi, gamma) - k.c1;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    Ok(bisect_increasing(f, 0.0, hi, CHI_REL_TOL))
}

/// Settings of the nested-grid search in [`chi_star`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    /// Interior points per axis in every round.
    pub grid: usize,
    /// Refinement rounds after the coarse pass.
    pub rounds: usize,
    /// Distance from the open interval ends, as a fraction of the interval length.
    pub margin: f64,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        Self { grid: 60, rounds: 4, margin: 1e-4 }
    }
}

/// One evaluated `(gamma, alpha)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub gamma: f64,
    pub alpha: f64,
    pub chi: f64,
}

/// Outcome of [`chi_star`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub theta: f64,
    pub p: f64,
    pub chi_star: f64,
    pub best_gamma: f64,
    pub best_alpha: f64,
    pub audit: Vec<AuditPoint>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |k| if k + 1 == n && n > 1 { hi } else { lo + step * k as f64 })
}

fn better(a: &AuditPoint, b: &AuditPoint) -> bool {
    // Larger chi wins; ties go to the lexicographically smaller (gamma, alpha).
    a.chi > b.chi || (a.chi == b.chi && (a.gamma, a.alpha) < (b.gamma, b.alpha))
}

/// Threshold `chi*_{theta,p}`: maximises [`chi_for`] over
/// `gamma in (3/2, (2p+2)/(p+2))`, `alpha in (0, 1/(4(gamma-1)))`.
///
/// `gamma` is gridded linearly and `alpha` as a log-spaced fraction of its
/// upper bound; each refinement round re-grids a window of two cells around
/// the incumbent.
pub fn chi_star(theta: f64, p: f64, search: &ThresholdSearch) -> Result<ThresholdResult> {
    if !(p > 2.0) {
        return domain(format!("p must exceed 2, got {p}"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return domain(format!("theta must be positive, got {theta}"));
    }
    if search.grid < 2 || !(search.margin > 0.0 && search.margin < 0.5) {
        return domain("threshold search needs grid >= 2 and margin in (0, 1/2)");
    }
    let g_len = gamma_upper(p) - 1.5;
    let (g_min, g_max) = (1.5 + search.margin * g_len, 1.5 + (1.0 - search.margin) * g_len);
    let (s_min, s_max) = (search.margin.ln(), (1.0 - search.margin).ln());
    let (mut g_lo, mut g_hi, mut s_lo, mut s_hi) = (g_min, g_max, s_min, s_max);

    let mut audit = Vec::new();
    let mut best: Option<AuditPoint> = None;
    for _ in 0..=search.rounds {
        let mut cells = Vec::with_capacity(search.grid * search.grid);
        for gamma in linspace(g_lo, g_hi, search.grid) {
            for log_s in linspace(s_lo, s_hi, search.grid) {
                cells.push((gamma, log_s.exp() * alpha_upper(gamma)));
            }
        }
        let eval = |&(gamma, alpha): &(f64, f64)| -> Result<AuditPoint> {
            let sp = StructuralParams::new(gamma, alpha, theta, p)?;
            Ok(AuditPoint { gamma, alpha, chi: chi_for(&sp)? })
        };
        #[cfg(feature = "parallel")]
        let points: Result<Vec<AuditPoint>> = {
            use rayon::prelude::*;
            cells.par_iter().map(eval).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let points: Result<Vec<AuditPoint>> = cells.iter().map(eval).collect();
        for pt in points? {
            if best.as_ref().map_or(true, |b| better(&pt, b)) {
                best = Some(pt);
            }
            audit.push(pt);
        }
        let b = best.expect("grid is nonempty");
        let dg = 2.0 * (g_hi - g_lo) / (search.grid - 1) as f64;
        let ds = 2.0 * (s_hi - s_lo) / (search.grid - 1) as f64;
        let log_s = (b.alpha / alpha_upper(b.gamma)).ln();
        g_lo = (b.gamma - dg).max(g_min);
        g_hi = (b.gamma + dg).min(g_max);
        s_lo = (log_s - ds).max(s_min);
        s_hi = (log_s + ds).min(s_max);
    }
    let b = best.expect("at least one round");
    Ok(ThresholdResult { theta, p, chi_star: b.chi, best_gamma: b.gamma, best_alpha: b.alpha, audit })
}

/// Which quantity a [`ReferenceRow`] compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceQuantity {
    /// `chi_{theta,alpha,gamma}` at a prescribed `(gamma, alpha)`.
    ChiAtPoint,
    /// The optimised threshold.
    ChiStar,
    /// `sqrt(theta)` times the optimised threshold.
    ScaledChiStar,
}

/// One line of the reference threshold table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub theta: f64,
    pub p: f64,
    pub quantity: ReferenceQuantity,
    pub computed: f64,
    /// Value stated as the lower bound (or limit) in the literature.
    pub claimed: f64,
    /// Acceptance band for `computed`.
    pub lower: f64,
    pub upper: Option<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub pass: bool,
}

/// Recomputes the five reference threshold values: the small-`theta`
/// asymptotic point, `chi*` at `theta = 0.1, 1, 10`, and `sqrt(theta) chi*`
/// at `theta = 1e4`.
pub fn reference_threshold_table(search: &ThresholdSearch) -> Result<Vec<ReferenceRow>> {
    let mut rows = Vec::with_capacity(5);

    // Small theta with gamma = 3/2 + sqrt(theta), alpha = 0.13 theta.
    let theta: f64 = 1e-6;
    let (gamma, alpha, p) = (1.5 + theta.sqrt(), 0.13 * theta, 4.0);
    let chi = chi_for(&StructuralParams::new(gamma, alpha, theta, p)?)?;
    rows.push(ReferenceRow {
        theta,
        p,
        quantity: ReferenceQuantity::ChiAtPoint,
        computed: chi,
        claimed: 3.28,
        lower: 3.27,
        upper: Some(3.30),
        gamma,
        alpha,
        pass: (3.27..=3.30).contains(&chi),
    });

    for (theta, p, bound, scaled) in [(0.1, 2.61, 2.42, false), (1.0, 3.31, 1.39, false), (10.0, 3.51, 0.51, false), (1e4, 3.51, 1.60, true)] {
        let res = chi_star(theta, p, search)?;
        let computed = if scaled { theta.sqrt() * res.chi_star } else { res.chi_star };
        rows.push(ReferenceRow {
            theta,
            p,
            quantity: if scaled { ReferenceQuantity::ScaledChiStar } else { ReferenceQuantity::ChiStar },
            computed,
            claimed: if scaled { 1.65 } else { bound },
            lower: bound,
            upper: None,
            gamma: res.best_gamma,
            alpha: res.best_alpha,
            pass: computed >= bound,
        });
    }
    Ok(rows)
}
