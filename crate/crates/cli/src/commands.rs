use std::fs::File;
use std::io::BufReader;

use kspp_core::constants::{chi_star, kappa, reference_threshold_table, ThresholdSearch};
use kspp_core::estimators::{
    drift_domination_check, epsilon_refinement, holder_modulus, martingale_residual, moment_estimates, refinement_spread,
    DominationReport, EpsilonRow, HolderReport,
};
use kspp_core::funineq::{extremal_profile, sweep, tightness_scan};
use kspp_core::simulator::{self, io, ReplicaStatus, RngProvenance, SimConfig, TrajectoryEnsemble};
use serde::Serialize;

use crate::artifacts::OutputDir;
use crate::kernel_audit;
use crate::settings::{parse_list, Settings};
use crate::{Command, Failure, RunArgs};

pub fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { run, binary } => simulate(&run, binary),
        Command::Estimate { run, trajectories, checks } => estimate(&run, trajectories.as_deref(), checks),
        Command::Threshold { theta, p, grid, rounds, margin, audit, out } => {
            threshold(theta, p, ThresholdSearch { grid, rounds, margin }, audit, &out)
        }
        Command::ThresholdTable { out } => threshold_table(&out),
        Command::VerifyInequality { cases, seed, out } => verify_inequality(cases, seed, &out),
        Command::VerifyKernels { points, samples, seed, out } => verify_kernels(points, samples, seed, &out),
        Command::MartingaleTest { run, n_list } => martingale_test(&run, n_list.as_deref()),
        Command::EpsilonStudy { run, eps, max_spread } => epsilon_study(&run, &eps, max_spread),
    }
}

fn settings(run: &RunArgs) -> Result<Settings, Failure> {
    let mut s = match &run.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(seed) = run.seed {
        s.set("seed", seed);
    }
    Ok(s)
}

fn blown_up(ens: &TrajectoryEnsemble) -> Vec<(usize, usize)> {
    (0..ens.n_replicas())
        .filter_map(|r| match ens.status(r) {
            ReplicaStatus::BlownUp { step } => Some((r, step)),
            ReplicaStatus::Ok => None,
        })
        .collect()
}

fn blowup_failure(events: &[(usize, usize)]) -> Result<(), Failure> {
    match events.first() {
        None => Ok(()),
        Some(&(r, step)) => Err(Failure::Blowup(format!(
            "{} replica(s) blew up, first replica {r} at step {step}; partial artifacts written",
            events.len()
        ))),
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    provenance: &'a RngProvenance,
    n_particles: usize,
    n_steps: usize,
    n_replicas: usize,
    statuses: Vec<ReplicaStatus>,
}

fn summary(ens: &TrajectoryEnsemble) -> RunSummary<'_> {
    RunSummary {
        provenance: ens.provenance(),
        n_particles: ens.n_particles(),
        n_steps: ens.config().n_steps,
        n_replicas: ens.n_replicas(),
        statuses: (0..ens.n_replicas()).map(|r| ens.status(r)).collect(),
    }
}

fn simulate(run: &RunArgs, binary: bool) -> Result<(), Failure> {
    let mut s = settings(run)?;
    let config = s.sim_config()?;
    let mut out = OutputDir::create(&run.out, "simulate")?;
    out.set_config(s.resolved());
    let ens = simulator::run(&config)?;
    out.write_with("trajectories.csv", |w| Ok(io::write_csv(&ens, w)?))?;
    if binary {
        out.write_bytes("trajectories.bin", |w| Ok(io::write_binary(&ens, w)?))?;
    }
    out.write_json("run.json", &summary(&ens))?;
    blowup_failure(&blown_up(&ens))
}

fn load_ensemble(path: &std::path::Path, mut config: SimConfig) -> Result<TrajectoryEnsemble, Failure> {
    let file = File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let data = io::read_binary(BufReader::new(file))?;
    config.n_particles = data.n_particles;
    config.n_steps = data.n_steps;
    config.dt = data.dt;
    config.n_replicas = data.paths.len();
    let provenance = RngProvenance {
        seed: config.seed,
        generator: format!("file:{}", path.display()),
        noise_tag: simulator::NOISE_TAG,
        init_tag: simulator::INIT_TAG,
    };
    Ok(TrajectoryEnsemble::from_paths(config, provenance, data.paths)?)
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    moments: &'a kspp_core::estimators::EstimateReport,
    domination: Option<DominationReport>,
    holder: Option<HolderReport>,
}

fn estimate(run: &RunArgs, trajectories: Option<&std::path::Path>, checks: bool) -> Result<(), Failure> {
    let mut s = settings(run)?;
    let config = s.sim_config()?;
    let ens = match trajectories {
        Some(path) => load_ensemble(path, config)?,
        None => simulator::run(&config)?,
    };
    let ep = s.estimator(ens.config())?;
    let slack = s.slack()?;
    let mut out = OutputDir::create(&run.out, "estimate")?;
    out.set_config(s.resolved());
    if let Some(path) = trajectories {
        out.record("trajectories", path.display());
        out.record("n_particles", ens.n_particles());
        out.record("n_steps", ens.config().n_steps);
        out.record("n_replicas", ens.n_replicas());
        out.record("dt", ens.dt());
    }
    let moments = moment_estimates(&ens, &ep)?;
    let (domination, holder) = if checks {
        (Some(drift_domination_check(&ens, &ep, slack)?), Some(holder_modulus(&ens, &ep, slack)?))
    } else {
        (None, None)
    };
    out.write_csv("estimate.csv", &moments.per_replica)?;
    out.write_json("estimate.json", &EstimateOutput { moments: &moments, domination, holder: holder.clone() })?;
    blowup_failure(&blown_up(&ens))?;
    if let Some(d) = domination {
        let bad = d.violations + d.envelope_violations + d.inequality_violations;
        if bad > 0 {
            return Err(Failure::Verification(format!("{bad} drift-domination violations")));
        }
    }
    if let Some(h) = holder {
        if h.violations > 0 {
            return Err(Failure::Verification(format!("{} Hölder-bound violations", h.violations)));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdRow {
    theta: f64,
    p: f64,
    chi_star: f64,
    gamma: f64,
    alpha: f64,
}

fn threshold(theta: f64, p: f64, search: ThresholdSearch, audit: bool, out: &std::path::Path) -> Result<(), Failure> {
    let mut out = OutputDir::create(out, "threshold")?;
    for (k, v) in [("theta", theta), ("p", p), ("margin", search.margin)] {
        out.record(k, v);
    }
    out.record("grid", search.grid);
    out.record("rounds", search.rounds);
    let res = chi_star(theta, p, &search)?;
    let row = ThresholdRow { theta, p, chi_star: res.chi_star, gamma: res.best_gamma, alpha: res.best_alpha };
    out.write_csv("threshold.csv", &[&row])?;
    out.write_json("threshold.json", &row)?;
    if audit {
        out.write_csv("threshold_audit.csv", &res.audit)?;
    }
    Ok(())
}

fn threshold_table(out: &std::path::Path) -> Result<(), Failure> {
    let search = ThresholdSearch::default();
    let mut out = OutputDir::create(out, "threshold-table")?;
    out.record("grid", search.grid);
    out.record("rounds", search.rounds);
    out.record("margin", search.margin);
    let rows = reference_threshold_table(&search)?;
    out.write_csv("threshold_table.csv", &rows)?;
    out.write_json("threshold_table.json", &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} threshold rows outside their bands")));
    }
    Ok(())
}

#[derive(Serialize)]
struct InequalityOutput {
    sweep: kspp_core::funineq::SweepReport,
    extremal_points: usize,
    worst_extremal_error: f64,
    tightness_eps: Vec<f64>,
    tightness_ratios: Vec<f64>,
    tightness_increasing: bool,
}

fn verify_inequality(cases: usize, seed: u64, out: &std::path::Path) -> Result<(), Failure> {
    let mut out = OutputDir::create(out, "verify-inequality")?;
    out.record("cases", cases);
    out.record("seed", seed);
    let report = sweep(cases, seed);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for ia in 0..10 {
        for ib in 0..10 {
            let a = 0.05 + 0.2 * ia as f64;
            let b = a + 0.05 + 0.3 * ib as f64;
            let k_ab = kappa(a, b)?;
            for k in [0.01, 1.0, 250.0] {
                worst = worst.max((extremal_profile(k, a, b)?.ratio - k_ab).abs() / k_ab);
                points += 1;
            }
        }
    }
    let eps = vec![1e-1, 1e-2, 1e-3, 1e-4];
    let ratios = tightness_scan(&eps, 0.5, 0.63, 1.0)?;
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]) && ratios.iter().all(|&r| r < 1.0);
    let violations = report.violations;
    out.write_json(
        "inequality.json",
        &InequalityOutput {
            sweep: report,
            extremal_points: points,
            worst_extremal_error: worst,
            tightness_eps: eps,
            tightness_ratios: ratios,
            tightness_increasing: increasing,
        },
    )?;
    if violations > 0 || worst >= 1e-9 || !increasing {
        return Err(Failure::Verification(format!(
            "{violations} violations, extremal error {worst:.2e}, tightness increasing: {increasing}"
        )));
    }
    Ok(())
}

fn verify_kernels(points: usize, samples: usize, seed: u64, out: &std::path::Path) -> Result<(), Failure> {
    let mut out = OutputDir::create(out, "verify-kernels")?;
    out.record("points", points);
    out.record("samples", samples);
    out.record("seed", seed);
    let audit = kernel_audit::audit(points, samples, seed);
    out.write_json("kernels.json", &audit)?;
    if !audit.pass {
        return Err(Failure::Verification(format!(
            "gradient error {:.2e}, {} envelope violations, mass error {:.2e}",
            audit.worst_gradient_error, audit.envelope_violations, audit.worst_mass_error
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct MartingaleRow {
    n_particles: usize,
    residual: f64,
    std_error: f64,
    variance: f64,
    ci_lower: f64,
    ci_upper: f64,
    consistent: bool,
    blown_up: usize,
}

#[derive(Serialize)]
struct MartingaleOutput<'a> {
    rows: &'a [MartingaleRow],
    /// Variance at each count divided by the variance at the next.
    variance_ratios: Vec<f64>,
}

fn martingale_test(run: &RunArgs, n_list: Option<&str>) -> Result<(), Failure> {
    let mut s = settings(run)?;
    let base = s.sim_config()?;
    let (bump, functional, t0, t1) = s.martingale(&base)?;
    let counts = match n_list {
        Some(text) => parse_list::<usize>(text)?,
        None => vec![base.n_particles],
    };
    let mut out = OutputDir::create(&run.out, "martingale-test")?;
    out.set_config(s.resolved());
    out.record("n_list", counts.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
    let mut rows = Vec::new();
    let mut events = Vec::new();
    for &n in &counts {
        let mut config = base.clone();
        config.n_particles = n;
        config.validate().map_err(Failure::from)?;
        let ens = simulator::run(&config)?;
        let rep = martingale_residual(&ens, &bump, &functional, t0, t1)?;
        let blown = blown_up(&ens);
        rows.push(MartingaleRow {
            n_particles: n,
            residual: rep.residual.mean,
            std_error: rep.residual.std_error,
            variance: rep.variance,
            ci_lower: rep.ci.lower,
            ci_upper: rep.ci.upper,
            consistent: rep.consistent,
            blown_up: blown.len(),
        });
        events.extend(blown);
    }
    let variance_ratios = rows.windows(2).map(|w| w[0].variance / w[1].variance).collect();
    out.write_csv("martingale.csv", &rows)?;
    out.write_json("martingale.json", &MartingaleOutput { rows: &rows, variance_ratios })?;
    blowup_failure(&events)?;
    let inconsistent: Vec<usize> = rows.iter().filter(|r| !r.consistent).map(|r| r.n_particles).collect();
    if !inconsistent.is_empty() {
        return Err(Failure::Verification(format!("residual interval excludes zero at N = {inconsistent:?}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct EpsilonCsvRow {
    epsilon: f64,
    e1: f64,
    e1_std_error: f64,
    e4: f64,
    e4_std_error: f64,
}

impl From<&EpsilonRow> for EpsilonCsvRow {
    fn from(r: &EpsilonRow) -> Self {
        Self { epsilon: r.epsilon, e1: r.e1.mean, e1_std_error: r.e1.std_error, e4: r.e4.mean, e4_std_error: r.e4.std_error }
    }
}

#[derive(Serialize)]
struct EpsilonOutput<'a> {
    rows: &'a [EpsilonRow],
    spread: f64,
    max_spread: f64,
}

fn epsilon_study(run: &RunArgs, eps: &str, max_spread: f64) -> Result<(), Failure> {
    let mut s = settings(run)?;
    let config = s.sim_config()?;
    let ep = s.estimator(&config)?;
    let eps_list = parse_list::<f64>(eps)?;
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Failure::Config("every smoothing parameter must be positive".into()));
    }
    let mut out = OutputDir::create(&run.out, "epsilon-study")?;
    out.set_config(s.resolved());
    out.record("eps", eps);
    out.record("max_spread", max_spread);
    let rows = epsilon_refinement(&config, &eps_list, &ep)?;
    let spread = refinement_spread(&rows);
    let csv_rows: Vec<EpsilonCsvRow> = rows.iter().map(Into::into).collect();
    out.write_csv("epsilon.csv", &csv_rows)?;
    out.write_json("epsilon.json", &EpsilonOutput { rows: &rows, spread, max_spread })?;
    if !(spread < max_spread) {
        return Err(Failure::Verification(format!("E4 spread {spread:.3} is not below {max_spread}")));
    }
    Ok(())
}
