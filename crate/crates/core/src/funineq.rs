//! The weighted integral inequality
//!
//! ```text
//! int_0^t (s + f(s))^{-(1+a)} ds <= kappa(a, b) * ( int_0^t (s + f(s))^{-(1+b)} ds )^{a/b}
//! ```
//!
//! for measurable `f >= 0` and `0 < a < b`, checked on profiles whose pieces
//! integrate in closed form, together with its extremal family
//! `g(s) = min{k, 1/s}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::kappa;
use crate::error::{domain, Result};

/// Piecewise-constant `f >= 0` on `[0, horizon]`.
///
/// `breakpoints` are the interior cut points; piece `k` covers
/// `[breakpoints[k-1], breakpoints[k]]` with `0` and `horizon` at the ends,
/// so there is one more value than breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if values.len() != breakpoints.len() + 1 {
            return domain("a step function needs exactly one more value than breakpoints");
        }
        let mut prev = 0.0;
        for &b in &breakpoints {
            if !(b > prev && b < horizon) {
                return domain("breakpoints must increase strictly inside (0, horizon)");
            }
            prev = b;
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return domain("step values must be finite and nonnegative");
        }
        Ok(Self { breakpoints, values, horizon })
    }

    /// Constant function `c` on `[0, horizon]`.
    pub fn constant(c: f64, horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![c], horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn pieces(&self) -> Vec<Piece> {
        let mut edges = Vec::with_capacity(self.values.len() + 1);
        edges.push(0.0);
        edges.extend_from_slice(&self.breakpoints);
        edges.push(self.horizon);
        edges
            .windows(2)
            .zip(&self.values)
            .map(|(w, &c)| Piece { start: w[0], end: w[1], shape: Shape::Shift(c) })
            .collect()
    }
}

/// How `s + f(s)` behaves on one piece.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// `s + f(s) = s + c`.
    Shift(f64),
    /// `s + f(s) = L`.
    Level(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    start: f64,
    end: f64,
    shape: Shape,
}

/// `int_{x0}^{x1} y^{-(1+q)} dy` for `0 < x0 <= x1`, written so that short
/// pieces far from the origin do not cancel.
fn power_integral(x0: f64, x1: f64, q: f64) -> f64 {
    if x0 == 0.0 {
        return f64::INFINITY;
    }
    -x0.powf(-q) * (-q * ((x1 - x0) / x0).ln_1p()).exp_m1() / q
}

fn piece_integral(piece: &Piece, q: f64) -> f64 {
    let len = piece.end - piece.start;
    match piece.shape {
        Shape::Shift(c) => power_integral(piece.start + c, piece.end + c, q),
        Shape::Level(level) => {
            if level == 0.0 {
                f64::INFINITY
            } else {
                len * level.powf(-(1.0 + q))
            }
        }
    }
}

fn profile_integral(pieces: &[Piece], q: f64) -> f64 {
    pieces.iter().map(|p| piece_integral(p, q)).sum()
}

/// Both sides of the inequality for one profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; `NaN` when both sides diverge.
    pub ratio: f64,
    /// Both integrals are infinite, so the inequality is vacuous.
    pub divergent: bool,
}

impl InequalityReport {
    /// Whether `lhs` exceeds `rhs` beyond relative rounding `1e-12`.
    pub fn violated(&self) -> bool {
        !self.divergent && self.lhs > self.rhs * (1.0 + 1e-12)
    }
}

fn check_exponents(a: f64, b: f64) -> Result<f64> {
    kappa(a, b)
}

fn evaluate_pieces(pieces: &[Piece], a: f64, b: f64) -> Result<InequalityReport> {
    let k = check_exponents(a, b)?;
    let lhs = profile_integral(pieces, a);
    let ib = profile_integral(pieces, b);
    let rhs = k * ib.powf(a / b);
    let divergent = lhs.is_infinite() || rhs.is_infinite();
    let ratio = if divergent { f64::NAN } else { lhs / rhs };
    Ok(InequalityReport { lhs, rhs, ratio, divergent })
}

/// Evaluates both sides for a step function, piece by piece in closed form.
pub fn evaluate_inequality(f: &StepFunction, a: f64, b: f64) -> Result<InequalityReport> {
    evaluate_pieces(&f.pieces(), a, b)
}

/// Integrals of the extremal profile `g(s) = min{k, 1/s}` over `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalProfile {
    /// `int g^{1+a} = k^a (1 + 1/a)`.
    pub i_a: f64,
    /// `int g^{1+b} = k^b (1 + 1/b)`.
    pub i_b: f64,
    /// `i_a / i_b^{a/b}`, which equals `kappa(a, b)` for every `k`.
    pub ratio: f64,
}

pub fn extremal_profile(k: f64, a: f64, b: f64) -> Result<ExtremalProfile> {
    if !(k > 0.0 && k.is_finite()) {
        return domain(format!("k must be positive, got {k}"));
    }
    check_exponents(a, b)?;
    let i_a = k.powf(a) * (1.0 + 1.0 / a);
    let i_b = k.powf(b) * (1.0 + 1.0 / b);
    Ok(ExtremalProfile { i_a, i_b, ratio: i_a / i_b.powf(a / b) })
}

/// Inequality ratios for `f(s) = (eps - s)_+` on `[0, t]`, one per `eps`.
pub fn tightness_scan(eps_list: &[f64], a: f64, b: f64, t: f64) -> Result<Vec<f64>> {
    check_exponents(a, b)?;
    eps_list
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps < t) {
                return domain(format!("eps must lie in (0, {t}), got {eps}"));
            }
            let pieces = [
                Piece { start: 0.0, end: eps, shape: Shape::Level(eps) },
                Piece { start: eps, end: t, shape: Shape::Shift(0.0) },
            ];
            Ok(evaluate_pieces(&pieces, a, b)?.ratio)
        })
        .collect()
}

/// One randomly drawn case of [`sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub f: StepFunction,
    pub a: f64,
    pub b: f64,
    pub report: InequalityReport,
}

/// Summary of a random sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cases: usize,
    pub violations: usize,
    pub divergent: usize,
    pub worst_ratio: f64,
    pub worst_case: Option<SweepCase>,
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Draws case `index` of the sweep family: up to 32 pieces, values
/// log-uniform in `[1e-4, 1e2]`, horizon log-uniform in `[1e-2, 1e2]`,
/// `0 < a < b <= 3`.
pub fn random_case(seed: u64, index: u64) -> SweepCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let horizon = log_uniform(&mut rng, 1e-2, 1e2);
    let n_pieces = rng.random_range(1..=32usize);
    let mut cuts: Vec<f64> = (1..n_pieces).map(|_| rng.random::<f64>() * horizon).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.retain(|&c| c > 0.0 && c < horizon);
    let values = (0..=cuts.len()).map(|_| log_uniform(&mut rng, 1e-4, 1e2)).collect();
    let (a, b) = loop {
        let x: f64 = 3.0 * (1.0 - rng.random::<f64>());
        let y: f64 = 3.0 * (1.0 - rng.random::<f64>());
        if x != y {
            break (x.min(y), x.max(y));
        }
    };
    let f = StepFunction::new(cuts, values, horizon).expect("generated step function is valid");
    let report = evaluate_inequality(&f, a, b).expect("generated exponents are valid");
    SweepCase { f, a, b, report }
}

/// Evaluates `cases` random step functions and counts violations.
pub fn sweep(cases: usize, seed: u64) -> SweepReport {
    let eval = |i: usize| random_case(seed, i as u64);
    #[cfg(feature = "parallel")]
    let all: Vec<SweepCase> = {
        use rayon::prelude::*;
        (0..cases).into_par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let all: Vec<SweepCase> = (0..cases).map(eval).collect();

    let mut report = SweepReport { cases, violations: 0, divergent: 0, worst_ratio: 0.0, worst_case: None };
    for case in all {
        if case.report.divergent {
            report.divergent += 1;
            continue;
        }
        if case.report.violated() {
            report.violations += 1;
        }
        if case.report.ratio > report.worst_ratio {
            report.worst_ratio = case.report.ratio;
            report.worst_case = Some(case);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_one_on_unit_interval() {
        let f = StepFunction::constant(1.0, 1.0).unwrap();
        let r = evaluate_inequality(&f, 0.5, 1.0).unwrap();
        assert!((r.lhs - 2.0 * (1.0 - 0.5f64.sqrt())).abs() < 1e-14);
        assert!((r.rhs - 1.5).abs() < 1e-14);
        assert!((r.ratio - 0.390524).abs() < 1e-6);
        assert!(!r.violated());
    }

    #[test]
    fn zero_function_diverges() {
        let f = StepFunction::constant(0.0, 1.0).unwrap();
        let r = evaluate_inequality(&f, 0.5, 1.0).unwrap();
        assert!(r.divergent && r.lhs.is_infinite() && r.rhs.is_infinite());
        assert!(!r.violated());
    }

    #[test]
    fn zero_away_from_origin_is_finite() {
        let f = StepFunction::new(vec![0.5], vec![0.2, 0.0], 1.0).unwrap();
        let r = evaluate_inequality(&f, 0.5, 1.0).unwrap();
        assert!(!r.divergent && r.ratio < 1.0);
    }

    #[test]
    fn power_integral_matches_naive_form() {
        for &(x0, x1, q) in &[(0.5, 3.0, 0.7), (1e-3, 1.0, 1.5), (2.0, 2.0 + 1e-9, 0.3)] {
            let naive = (f64::powf(x0, -q) - f64::powf(x1, -q)) / q;
            assert!((power_integral(x0, x1, q) - naive).abs() <= 1e-6 * naive.abs());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(StepFunction::new(vec![0.5, 0.4], vec![1.0; 3], 1.0).is_err());
        assert!(StepFunction::new(vec![1.0], vec![1.0; 2], 1.0).is_err());
        assert!(StepFunction::new(vec![], vec![-1.0], 1.0).is_err());
        assert!(StepFunction::new(vec![], vec![1.0; 2], 1.0).is_err());
        let f = StepFunction::constant(1.0, 1.0).unwrap();
        assert!(evaluate_inequality(&f, 1.0, 1.0).is_err());
        assert!(extremal_profile(0.0, 0.5, 1.0).is_err());
        assert!(tightness_scan(&[1.0], 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn extremal_unit_values() {
        let e = extremal_profile(1.0, 0.5, 1.0).unwrap();
        assert!((e.i_a - 3.0).abs() < 1e-15);
        assert!((e.i_b - 2.0).abs() < 1e-15);
        assert!((e.ratio - 3.0 / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tightness_ratios_increase() {
        let r = tightness_scan(&[1e-1, 1e-2, 1e-3, 1e-4, 1e-6], 0.5, 1.0, 1.0).unwrap();
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        assert!(r[4] >= 0.99 && r[4] < 1.0);
    }

    #[test]
    fn random_cases_are_reproducible() {
        assert_eq!(random_case(3, 17), random_case(3, 17));
        assert_ne!(random_case(3, 17), random_case(3, 18));
    }

    #[test]
    fn small_sweep_has_no_violation() {
        let r = sweep(500, 11);
        assert_eq!(r.violations, 0);
        assert!(r.worst_ratio > 0.0 && r.worst_ratio <= 1.0);
    }
}
