use super::*;
use crate::kernels::SourceSpec;
use crate::quadrature::integrate;
use crate::simulator::{run, InitLaw, NoiseMode};

fn frozen_pair(dt: f64, steps: usize, eps: f64) -> SimConfig {
    SimConfig {
        params: KernelParams::new(1.0, 0.0, 0.0, eps, 4.0).unwrap(),
        source: SourceSpec::zero(),
        n_particles: 2,
        dt,
        n_steps: steps,
        n_replicas: 1,
        seed: 0,
        init: InitLaw::Explicit(vec![[0.0, 0.0], [1.0, 0.0]]),
        history_cutoff: None,
        noise: NoiseMode::Zero,
    }
}

fn brownian(n: usize, steps: usize, replicas: usize, chi: f64) -> SimConfig {
    SimConfig {
        params: KernelParams::new(1.0, 0.0, chi, 0.05, 4.0).unwrap(),
        source: SourceSpec::zero(),
        n_particles: n,
        dt: 0.02,
        n_steps: steps,
        n_replicas: replicas,
        seed: 5,
        init: InitLaw::Gaussian { mean: [0.0, 0.0], variance: 1.0 },
        history_cutoff: None,
        noise: NoiseMode::Standard,
    }
}

#[test]
fn params_validation() {
    assert!(EstimatorParams::new(1.5, 0.05, 0.0, 1.0).is_err());
    assert!(EstimatorParams::new(1.6, 0.5, 0.0, 1.0).is_err());
    assert!(EstimatorParams::new(1.6, 0.05, -1.0, 1.0).is_err());
    assert!(EstimatorParams::new(1.6, 0.05, 0.0, 0.0).is_err());
    let ep = EstimatorParams::new(1.6, 0.05, 0.0, 2.0).unwrap();
    assert!(ep.horizon_steps(&frozen_pair(0.1, 10, 0.1)).is_err());
    assert_eq!(ep.horizon_steps(&frozen_pair(0.1, 30, 0.1)).unwrap(), 20);
}

#[test]
fn pair_selection_counts() {
    assert_eq!(PairSelection::Single.pairs(5), vec![(0, 1)]);
    assert_eq!(PairSelection::AllOrdered.pairs(4).len(), 12);
}

#[test]
fn frozen_pair_e1_is_one() {
    let ens = run(&frozen_pair(1e-3, 1000, 0.1)).unwrap();
    let ep = EstimatorParams::new(1.6, 0.05, 0.0, 1.0).unwrap().with_pairs(PairSelection::Single);
    let rep = moment_estimates(&ens, &ep).unwrap();
    assert!((rep.e1.mean - 1.0).abs() < 1e-12);
    assert_eq!(rep.divergent_terms, 0);
}

#[test]
fn frozen_pair_e2_matches_closed_form() {
    let ens = run(&frozen_pair(1e-3, 1000, 0.1)).unwrap();
    let ep = EstimatorParams::new(1.6, 0.05, 0.0, 1.0).unwrap().with_pairs(PairSelection::Single);
    let rep = moment_estimates(&ens, &ep).unwrap();
    // int_0^1 int_0^s (s-u+1)^{-1.6} du ds = (1/0.6) (1 - (2^{0.4} - 1)/0.4)
    let exact = (1.0 - (2f64.powf(0.4) - 1.0) / 0.4) / 0.6;
    assert!((rep.e2.mean - exact).abs() / exact < 1e-3, "{} vs {exact}", rep.e2.mean);
}

#[test]
fn coincident_start_is_counted_not_propagated() {
    let mut c = brownian(3, 10, 2, 0.0);
    c.init = InitLaw::Point([0.0, 0.0]);
    let ens = run(&c).unwrap();
    let ep = EstimatorParams::new(1.6, 0.05, 0.0, 0.2).unwrap();
    let rep = moment_estimates(&ens, &ep).unwrap();
    assert_eq!(rep.divergent_terms, 2 * 6);
    assert!(rep.e1.mean.is_finite());
}

#[test]
fn estimators_are_invariant_under_relabeling() {
    let c = brownian(3, 12, 1, 0.8);
    let ens = run(&c).unwrap();
    let perm = [2usize, 0, 1];
    let path: Vec<Vec2> = ens.path(0).chunks(3).flat_map(|row| perm.iter().map(move |&k| row[k])).collect();
    let relabeled = TrajectoryEnsemble::from_paths(c.clone(), ens.provenance().clone(), vec![path]).unwrap();
    let ep = EstimatorParams::new(1.62, 0.045, 0.01, 0.2).unwrap();
    let a = moment_estimates(&ens, &ep).unwrap();
    let b = moment_estimates(&relabeled, &ep).unwrap();
    for (x, y) in [(a.e1, b.e1), (a.e2, b.e2), (a.e3, b.e3), (a.e4, b.e4), (a.s, b.s), (a.s_bar, b.s_bar)] {
        assert!((x.mean - y.mean).abs() <= 1e-12 * x.mean.abs());
    }
}

#[test]
fn e3_is_dominated_termwise_by_envelope() {
    let c = brownian(2, 15, 1, 0.5);
    let ens = run(&c).unwrap();
    let (gamma, alpha) = (1.62, 0.045);
    let env = GradEnvelope::new(alpha, 1.0).unwrap();
    let path = ens.path(0);
    let q3 = 2.0 * gamma / 3.0;
    for m in 1..=15 {
        for l in 0..m {
            let lag = (m - l) as f64 * c.dt;
            let d = geom::sub(path[2 * m], path[2 * l + 1]);
            let gk = geom::norm(chemo_kernel_grad(lag, d, &c.params).unwrap());
            assert!(gk.powf(q3) <= env.eval(lag, d, 0.0).powf(q3));
        }
    }
}

#[test]
fn frozen_pair_domination_against_quadrature() {
    let eps = 0.01;
    let ens = run(&frozen_pair(1e-3, 1000, eps)).unwrap();
    let ep = EstimatorParams::new(1.6, 0.05, 0.0, 1.0).unwrap().with_pairs(PairSelection::Single);
    let rep = drift_domination_check(&ens, &ep, DEFAULT_SLACK).unwrap();
    assert_eq!(rep.violations + rep.envelope_violations + rep.inequality_violations, 0);
    assert!(rep.max_ratio < 0.5);

    let params = ens.config().params;
    let d = crate::simulator::pair_drift(&ens, 0, 0, 1, 1000).unwrap();
    let d_quad = integrate(|u| crate::kernels::smoothed_grad(u, [-1.0, 0.0], &params).unwrap()[0], 0.0, 1.0, 1e-12, 1e-12);
    assert!((d[0] - d_quad.value).abs() / d_quad.value.abs() < 1e-3);
    let (s, _) = s_functionals(ens.path(0), 2, (0, 1), 1000, &ep, 1e-3);
    let s_quad = integrate(|u| (u + 0.05f64).powf(-1.6), 0.0, 1.0, 1e-12, 1e-12).value;
    assert!((s - s_quad).abs() / s_quad < 2e-2);
}

#[test]
fn domination_on_brownian_pairs() {
    let ens = run(&brownian(2, 25, 30, 1.0)).unwrap();
    let ep = EstimatorParams::new(1.62, 0.045, 0.0, 0.5).unwrap();
    let rep = drift_domination_check(&ens, &ep, DEFAULT_SLACK).unwrap();
    assert_eq!(rep.checked, 30 * 2 * 25);
    assert_eq!((rep.violations, rep.envelope_violations, rep.inequality_violations), (0, 0, 0));
}

#[test]
fn holder_constant_of_linear_path() {
    let dt = 0.01;
    let v = [0.3, -0.4];
    let path: Vec<Vec2> = (0..=100).map(|m| geom::scale(v, m as f64 * dt)).collect();
    let beta = (2.0 * 1.7 - 3.0) / (2.0 * 0.7);
    let z = holder_constant(&path, dt, beta);
    assert!((z - 0.5 * 1f64.powf(1.0 - beta)).abs() < 1e-12);
}

#[test]
fn holder_modulus_ignores_coupling_strength() {
    let a = holder_modulus(&run(&brownian(3, 10, 2, 0.0)).unwrap(), &EstimatorParams::new(1.7, 0.05, 0.0, 0.2).unwrap(), DEFAULT_SLACK).unwrap();
    let free = brownian(3, 10, 2, 0.0);
    let ens = run(&free).unwrap();
    let mut coupled = free.clone();
    coupled.params.chi = 2.0;
    let relabeled = TrajectoryEnsemble::from_paths(coupled, ens.provenance().clone(), (0..2).map(|r| ens.path(r).to_vec()).collect()).unwrap();
    let b = holder_modulus(&relabeled, &EstimatorParams::new(1.7, 0.05, 0.0, 0.2).unwrap(), DEFAULT_SLACK).unwrap();
    assert_eq!(a.z_hat, b.z_hat);
    assert_eq!(a.violations, 0);
}

#[test]
fn holder_bound_holds_on_interacting_runs() {
    let ens = run(&brownian(3, 20, 6, 1.0)).unwrap();
    let ep = EstimatorParams::new(1.7, 0.05, 0.0, 0.4).unwrap();
    let rep = holder_modulus(&ens, &ep, DEFAULT_SLACK).unwrap();
    assert_eq!(rep.violations, 0);
    assert_eq!(rep.checked, 18);
    assert!(rep.z_hat.iter().all(|&z| z > 0.0));
}

#[test]
fn gaussian_balance_holds_for_free_particles() {
    let ens = run(&brownian(2, 25, 400, 0.0)).unwrap();
    let ep = EstimatorParams::new(1.6, 0.05, 0.0, 0.5).unwrap();
    let rep = ito_balance_check(&ens, ItoTest::Gaussian, &ep).unwrap();
    assert!(rep.consistent, "{rep:?}");
}

#[test]
fn psi_balance_runs_and_reports() {
    let ens = run(&brownian(2, 20, 50, 0.0)).unwrap();
    let ep = EstimatorParams::new(1.7, 0.05, 0.0, 0.4).unwrap();
    let rep = ito_balance_check(&ens, ItoTest::Psi, &ep).unwrap();
    assert!(rep.residual.mean.is_finite() && rep.ci.lower <= rep.ci.upper);
}

#[test]
fn martingale_rejects_anticipating_functional() {
    let ens = run(&brownian(2, 20, 2, 0.0)).unwrap();
    let bump = Bump::new([0.0, 0.0], 2.0).unwrap();
    let late = PathFunctional::Window { tau: 0.3, coordinate: 0, lower: -1.0, upper: 1.0 };
    assert!(martingale_residual(&ens, &bump, &late, 0.2, 0.4).is_err());
    assert!(martingale_residual_unchecked(&ens, &bump, &late, 0.2, 0.4).is_ok());
    assert!(martingale_residual(&ens, &bump, &PathFunctional::Constant, 0.4, 0.2).is_err());
}

#[test]
fn epsilon_rows_share_noise() {
    let c = brownian(3, 10, 4, 0.5);
    let ep = EstimatorParams::new(1.62, 0.045, 0.0, 0.2).unwrap();
    let rows = epsilon_refinement(&c, &[0.1, 0.05], &ep).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(refinement_spread(&rows) >= 1.0);
}

#[test]
fn time_sums_converge_under_dt_halving() {
    let at = |dt: f64| {
        let mut c = frozen_pair(dt, (0.4 / dt).round() as usize, 0.05);
        c.params.chi = 1.0;
        let ens = run(&c).unwrap();
        let r = moment_estimates(&ens, &EstimatorParams::new(1.62, 0.045, 0.0, 0.4).unwrap()).unwrap();
        [r.e2.mean, r.e3.mean]
    };
    let (q1, q2, q3) = (at(0.02), at(0.01), at(0.005));
    for k in 0..2 {
        let ratio = (q1[k] - q2[k]) / (q2[k] - q3[k]);
        assert!((1.0..=4.0).contains(&ratio), "functional {k}: ratio {ratio}");
    }
}
