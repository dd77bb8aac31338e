//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria to run can be picked by number (`cargo test --test acceptance -- 1 6`);
//! with no numbers all eight run. Failures are reported but the exit code is 0
//! unless `PANDA_ACCEPTANCE_STRICT=1`.

use std::fs;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use panda::datagen::{build_model, sample, stream_seed, ModelKind, SimSpec};
use panda::estimators::{kclass_panda_fit, panda_fit, Method};
use panda::evaluation::{mean_sd, median, MetricsRow};
use panda::experiment::{monte_carlo_error, run_replicates, write_outputs, ExperimentConfig, ParameterMode};
use panda::linalg::eigen_range;
use panda::oracle::run_oracle_suite;
use panda::solver::{project_nonneg, project_soc, AdmmConfig};
use panda::tuning::grid_search;
use panda::{compute_suff_stats, population_risk, std_normal_cdf, GaussianModel, LinearRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REPLICATES: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// AR(1) `(s, p) = (5, 400)`, `n = 200`, PANDA with `λ̃` tuned on the default grid.
fn ar1_cell(c: f64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelKind::Ar1,
        p: 400,
        s: 5,
        methods: vec![Method::Panda],
        replicates: REPLICATES,
        seed: 1,
        mode: ParameterMode::Practical,
        c_values: vec![c],
        primal_tol: 1e-5,
        change_tol: 1e-6,
        jobs: jobs(),
        write_curve: false,
        write_trace: false,
        ..ExperimentConfig::default()
    }
}

fn column(rows: &[MetricsRow], f: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let reports = match run_oracle_suite(10, 3, 2024) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("suite failed: {e}")),
    };
    let gap = reports.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
    let violation = reports.iter().map(|r| r.violation).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        gap <= 1e-2 && violation <= 1e-6 && secs < 120.0,
        format!(
            "{} comparisons, max relative gap {gap:.2e} (≤ 1e-2), max violation {violation:.2e} (≤ 1e-6), {secs:.1} s (< 120 s)",
            reports.len()
        ),
    )
}

struct Ar1Runs {
    c20: Option<Vec<MetricsRow>>,
}

fn run_cell(c: f64) -> Result<Vec<MetricsRow>, String> {
    let out = run_replicates(&ar1_cell(c)).map_err(|e| e.to_string())?;
    if !out.failures.is_empty() {
        return Err(format!("{} failed replicates: {:?}", out.failures.len(), out.failures));
    }
    Ok(out.rows)
}

fn criterion_2(runs: &mut Ar1Runs) -> Outcome {
    let start = Instant::now();
    let rows = match run_cell(20.0) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let (mean, sd) = mean_sd(&column(&rows, |r| r.pop_risk));
    let secs = start.elapsed().as_secs_f64();
    runs.c20 = Some(rows);
    outcome(
        (0.193..=0.221).contains(&mean),
        format!("mean risk {mean:.4} (sd {sd:.4}) in [0.193, 0.221]; {secs:.0} s on {} threads", jobs()),
    )
}

fn criterion_3(runs: &mut Ar1Runs) -> Outcome {
    if runs.c20.is_none() {
        if let Err(e) = run_cell(20.0).map(|r| runs.c20 = Some(r)) {
            return outcome(false, e);
        }
    }
    let rows = runs.c20.as_ref().unwrap();
    let (mean, sd) = mean_sd(&column(rows, |r| r.l2_err));
    outcome((1.74..=1.99).contains(&mean), format!("mean ℓ2 error {mean:.4} (sd {sd:.4}) in [1.74, 1.99]"))
}

fn criterion_4(runs: &mut Ar1Runs) -> Outcome {
    let start = Instant::now();
    let mut means = Vec::new();
    for c in [10.0, 100.0, 1e-3] {
        match run_cell(c) {
            Ok(rows) => means.push(mean_sd(&column(&rows, |r| r.pop_risk)).0),
            Err(e) => return outcome(false, format!("c = {c}: {e}")),
        }
    }
    if runs.c20.is_none() {
        if let Err(e) = run_cell(20.0).map(|r| runs.c20 = Some(r)) {
            return outcome(false, e);
        }
    }
    let r20 = mean_sd(&column(runs.c20.as_ref().unwrap(), |r| r.pop_risk)).0;
    let (r10, r100, r_small) = (means[0], means[1], means[2]);
    let flat = (r10 - r100).abs();
    let jump = r_small - r20;
    outcome(
        flat <= 0.01 && jump >= 0.05,
        format!(
            "risk c=10 {r10:.4}, c=100 {r100:.4} (|diff| {flat:.4} ≤ 0.01); c=1e-3 {r_small:.4} vs c=20 {r20:.4} (excess {jump:.4} ≥ 0.05); {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        model: ModelKind::VaryingDiagonal,
        ..ar1_cell(20.0)
    };
    let out = match run_replicates(&cfg) {
        Ok(o) => o,
        Err(e) => return outcome(false, e.to_string()),
    };
    if !out.failures.is_empty() {
        return outcome(false, format!("{} failed replicates", out.failures.len()));
    }
    let tp = mean_sd(&column(&out.rows, |r| r.tp)).0;
    let recall_s = mean_sd(&column(&out.rows, |r| r.recall * r.s as f64)).0;
    outcome(
        tp >= 4.8 && recall_s >= 4.8,
        format!(
            "mean TP {tp:.2} (≥ 4.8), mean recall·s {recall_s:.2} (≥ 4.8); {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn random_model(p: usize, rng: &mut ChaCha8Rng) -> GaussianModel {
    let a = DMatrix::from_fn(p + 3, p, |_, _| rng.random_range(-1.0..1.0));
    let sigma = a.transpose() * a / (p + 3) as f64 + DMatrix::identity(p, p) * 0.2;
    let mu0 = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let mu1 = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    GaussianModel::new(mu0, mu1, sigma).expect("random model")
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let p = rng.random_range(1..=10);
        let model = random_model(p, &mut rng);
        let closed = std_normal_cdf(-model.delta() / 2.0);
        match monte_carlo_error(&model, &model.bayes_rule(), 50_000, stream_seed(6, k)) {
            Ok(e) => worst = worst.max((e - closed).abs()),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(worst <= 0.005, format!("max |empirical − Φ(−Δ/2)| {worst:.4} over 5 models, 10⁵ draws each (≤ 0.005)"))
}

fn projection_checks() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..10_000 {
        let d = rng.random_range(1..8);
        let x = DVector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
        let y = DVector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
        let (t, s): (f64, f64) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (px, pt) = project_soc(&x, t);
        let (py, ps) = project_soc(&y, s);
        let (qx, qt) = project_soc(&px, pt);
        if px.norm() > pt + 1e-10 || (&qx - &px).amax() > 1e-10 || (qt - pt).abs() > 1e-10 {
            return Err("cone projection membership/idempotence".into());
        }
        let before = ((&x - &y).norm_squared() + (t - s).powi(2)).sqrt();
        let after = ((&px - &py).norm_squared() + (pt - ps).powi(2)).sqrt();
        if after > before + 1e-10 {
            return Err("cone projection expands a pair".into());
        }
        let (nx, ny) = (project_nonneg(&x), project_nonneg(&y));
        if nx.min() < 0.0 || project_nonneg(&nx) != nx || (&nx - &ny).norm() > (&x - &y).norm() + 1e-10 {
            return Err("orthant projection".into());
        }
    }
    Ok(())
}

fn risk_checks() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..20 {
        let model = random_model(6, &mut rng);
        let beta = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
        let alpha = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let base = population_risk(&LinearRule::new(alpha.clone(), beta.clone()), &model).map_err(|e| e.to_string())?;
        for scale in [1e-3, 0.5, 7.0, 1e4] {
            let r = population_risk(&LinearRule::new(alpha.clone(), &beta * scale), &model).map_err(|e| e.to_string())?;
            if (r - base).abs() > 1e-12 {
                return Err(format!("risk changed by {:.1e} under scaling", (r - base).abs()));
            }
        }
    }
    let model = random_model(6, &mut rng);
    let bayes = population_risk(&model.bayes_rule(), &model).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let eps = DVector::from_fn(6, |_, _| rng.random_range(-0.5..0.5));
        let r = population_risk(&LinearRule::new(model.mu_m(), model.beta_star() + eps), &model)
            .map_err(|e| e.to_string())?;
        if bayes > r + 1e-12 {
            return Err("a perturbed rule beat the Bayes rule".into());
        }
    }
    Ok(())
}

fn spd_checks() -> Result<(), String> {
    for kind in ModelKind::ALL {
        for seed in 0..50 {
            let model = build_model(&SimSpec::new(kind, 40, 5, seed)).map_err(|e| format!("{kind} seed {seed}: {e}"))?;
            let sigma = model.sigma();
            if sigma != &sigma.transpose() || eigen_range(sigma).0 <= 0.0 {
                return Err(format!("{kind} seed {seed} is not SPD"));
            }
        }
    }
    Ok(())
}

fn kclass_check() -> Result<f64, String> {
    let model = build_model(&SimSpec::new(ModelKind::Ar1, 50, 5, 3)).map_err(|e| e.to_string())?;
    let (x0, x1) = sample(&model, 100, 100, 4).map_err(|e| e.to_string())?;
    let stats = compute_suff_stats(&x0, &x1).map_err(|e| e.to_string())?;
    let cfg = AdmmConfig::default();
    let lambda = stats.rate();
    let binary = panda_fit(&stats, 20.0, lambda, &cfg).map_err(|e| e.to_string())?;
    let multi = kclass_panda_fit(&[x0, x1], &[20.0], lambda, &cfg, None).map_err(|e| e.to_string())?;
    let diff = (&multi.betas[0] - &binary.beta_hat).amax();
    if diff > 1e-6 {
        return Err(format!("K=2 direction differs by {diff:.1e}"));
    }
    Ok(diff)
}

fn determinism_check() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for (name, jobs) in [("a", 1), ("b", 2)] {
        let cfg = ExperimentConfig {
            p: 30,
            n0: 50,
            n1: 50,
            n_val: 50,
            n_test: 100,
            replicates: 2,
            lambda_tilde_min: 0.5,
            lambda_tilde_max: 3.0,
            lambda_tilde_step: 0.5,
            jobs,
            output: dir.path().join(name).join("run"),
            ..ExperimentConfig::default()
        };
        let out = run_replicates(&cfg).map_err(|e| e.to_string())?;
        let files = write_outputs(&cfg, &out).map_err(|e| e.to_string())?;
        bytes.push(fs::read(files.rows).map_err(|e| e.to_string())?);
    }
    if bytes[0] != bytes[1] {
        return Err("rows.csv differs between identical seeded runs".into());
    }
    Ok(())
}

fn warm_cold_check() -> Result<(f64, f64), String> {
    let model = build_model(&SimSpec::new(ModelKind::Ar1, 100, 5, 5)).map_err(|e| e.to_string())?;
    let (x0, x1) = sample(&model, 200, 200, stream_seed(5, 1)).map_err(|e| e.to_string())?;
    let (v0, v1) = sample(&model, 200, 200, stream_seed(5, 2)).map_err(|e| e.to_string())?;
    let stats = compute_suff_stats(&x0, &x1).map_err(|e| e.to_string())?;
    let grid = panda::tuning::TuneGrid::default();
    let cfg = AdmmConfig::default();
    let warm = grid_search(&stats, &v0, &v1, Method::Panda, &grid, &cfg, true).map_err(|e| e.to_string())?;
    let cold = grid_search(&stats, &v0, &v1, Method::Panda, &grid, &cfg, false).map_err(|e| e.to_string())?;
    if (warm.best_lambda_tilde - cold.best_lambda_tilde).abs() > 0.1 + 1e-9 {
        return Err(format!(
            "warm start picked λ̃ {} but cold start {}",
            warm.best_lambda_tilde, cold.best_lambda_tilde
        ));
    }
    Ok((warm.best_lambda_tilde, cold.best_lambda_tilde))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut record = |name: &str, r: Result<String, String>| match r {
        Ok(s) => notes.push(format!("{name} ok{s}")),
        Err(e) => {
            pass = false;
            notes.push(format!("{name} FAILED ({e})"));
        }
    };
    record("projections (10⁴ points)", projection_checks().map(|_| String::new()));
    record("risk scale/Bayes dominance", risk_checks().map(|_| String::new()));
    record("Σ SPD (5 models × 50 seeds)", spd_checks().map(|_| String::new()));
    record("K=2 reduction", kclass_check().map(|d| format!(" ({d:.1e})")));
    record("byte-identical rows.csv", determinism_check().map(|_| String::new()));
    record(
        "warm vs cold λ̃",
        warm_cold_check().map(|(w, c)| format!(" ({w} vs {c})")),
    );
    outcome(pass, format!("{}; {:.0} s", notes.join(", "), start.elapsed().as_secs_f64()))
}

fn criterion_8() -> Outcome {
    let mut medians = Vec::new();
    for n in [200, 800] {
        let cfg = ExperimentConfig {
            model: ModelKind::Ar1,
            p: 100,
            s: 5,
            n0: n,
            n1: n,
            n_test: 100,
            methods: vec![Method::Panda],
            replicates: REPLICATES,
            mode: ParameterMode::Fixed,
            c: 20.0,
            lambda_tilde: 1.0,
            jobs: jobs(),
            write_curve: false,
            write_trace: false,
            ..ExperimentConfig::default()
        };
        let out = match run_replicates(&cfg) {
            Ok(o) => o,
            Err(e) => return outcome(false, e.to_string()),
        };
        let errs: Vec<f64> = out.rows.iter().filter_map(|r| r.tau_rel_err).collect();
        if errs.len() != REPLICATES {
            return outcome(false, format!("n = {n}: only {} replicates reported τ̂", errs.len()));
        }
        medians.push(median(&errs));
    }
    outcome(
        medians[1] < medians[0],
        format!("median |τ̂²−Δ²|/Δ²: n=200 {:.4}, n=800 {:.4} (must decrease)", medians[0], medians[1]),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).filter(|k| (1..=8).contains(k)).collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let names = [
        "solver-oracle equivalence",
        "AR(1) 5/400 tuned PANDA risk",
        "AR(1) 5/400 tuned PANDA ℓ2 error",
        "c-insensitivity",
        "Varying Diagonal variable selection",
        "Bayes risk vs Monte-Carlo",
        "invariant suite",
        "τ̂ consistency trend",
    ];
    let mut runs = Ar1Runs { c20: None };
    let mut failed = 0;
    // cheap criteria first
    for k in [1, 6, 7, 8, 5, 2, 3, 4] {
        if !wanted(k) {
            continue;
        }
        let o = match k {
            1 => criterion_1(),
            2 => criterion_2(&mut runs),
            3 => criterion_3(&mut runs),
            4 => criterion_4(&mut runs),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            _ => criterion_8(),
        };
        failed += usize::from(!o.pass);
        println!("{} criterion {k} ({}): {}", if o.pass { "PASS" } else { "FAIL" }, names[k - 1], o.detail);
    }
    if failed > 0 && std::env::var("PANDA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
