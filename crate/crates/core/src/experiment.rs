//! Seeded simulation replicates: sample, tune, fit, evaluate, aggregate and
//! write the result tables.
//!
//! Replicate `r` uses seed `seed + r`. The model is built from that seed and
//! the training, validation and test draws use streams 1, 2 and 3 of it.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{build_model, sample, stream_seed, ModelKind, SimSpec};
use crate::error::{Error, Result};
use crate::estimators::{kclass_classify, kclass_panda_fit_stats, theoretical_defaults, FitResult, Method};
use crate::evaluation::{
    aggregate, auc, auc_scores, empirical_error, estimation_errors, tau_relative_error, variable_selection, Failure,
    MetricsRow, SummaryRow,
};
use crate::model::{compute_suff_stats, population_risk, GaussianModel, LinearRule, SuffStats};
use crate::solver::{AdmmConfig, SolveStatus};
use crate::tuning::{fit_method, grid_search, TuneGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParameterMode {
    /// PANDA uses the closed-form `(c, λ)`; the baselines are still tuned.
    Theoretical,
    /// `λ̃` (and `c` when several are given) tuned on the validation split.
    Practical,
    /// `c` and `λ̃` taken from the config.
    Fixed,
}

impl fmt::Display for ParameterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParameterMode::Theoretical => "theoretical",
            ParameterMode::Practical => "practical",
            ParameterMode::Fixed => "fixed",
        })
    }
}

impl FromStr for ParameterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "theoretical" => Ok(ParameterMode::Theoretical),
            "practical" => Ok(ParameterMode::Practical),
            "fixed" => Ok(ParameterMode::Fixed),
            other => Err(Error::InvalidInput(format!("unknown mode '{other}'"))),
        }
    }
}

/// One simulation cell. Every field has a default, so a config file only
/// needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub p: usize,
    pub s: usize,
    pub eta_scale: f64,
    pub methods: Vec<Method>,
    /// Training samples per class.
    pub n0: usize,
    pub n1: usize,
    /// Validation samples per class.
    pub n_val: usize,
    /// Test samples per class.
    pub n_test: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mode: ParameterMode,
    /// PANDA's `c` in fixed mode.
    pub c: f64,
    /// `λ̃` in fixed mode.
    pub lambda_tilde: f64,
    pub lambda_tilde_min: f64,
    pub lambda_tilde_max: f64,
    pub lambda_tilde_step: f64,
    /// Values of `c` searched in practical mode.
    pub c_values: Vec<f64>,
    pub warm_start: bool,
    pub selection_threshold: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub change_tol: f64,
    /// Worker threads for replicates (0 uses all cores).
    pub jobs: usize,
    /// Path prefix of the output files.
    pub output: PathBuf,
    pub write_curve: bool,
    pub write_trace: bool,
    /// Trace sampling interval for the replicate-0 refits.
    pub trace_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let admm = AdmmConfig::default();
        Self {
            model: ModelKind::Ar1,
            p: 400,
            s: 5,
            eta_scale: 1.0,
            methods: vec![Method::Panda, Method::Lpd, Method::AdaLda],
            n0: 200,
            n1: 200,
            n_val: 200,
            n_test: 500,
            replicates: 10,
            seed: 1,
            mode: ParameterMode::Practical,
            c: 20.0,
            lambda_tilde: 1.0,
            lambda_tilde_min: 0.1,
            lambda_tilde_max: 8.0,
            lambda_tilde_step: 0.1,
            c_values: vec![20.0],
            warm_start: true,
            selection_threshold: 0.01,
            rho: admm.rho,
            max_iters: admm.max_iters,
            primal_tol: admm.primal_tol,
            change_tol: admm.change_tol,
            jobs: 1,
            output: PathBuf::from("panda_run"),
            write_curve: true,
            write_trace: true,
            trace_every: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn sim_spec(&self, seed: u64) -> SimSpec {
        SimSpec {
            model: self.model,
            p: self.p,
            s: self.s,
            eta_scale: self.eta_scale,
            seed,
        }
    }

    pub fn grid(&self) -> TuneGrid {
        TuneGrid::range(
            self.lambda_tilde_min,
            self.lambda_tilde_max,
            self.lambda_tilde_step,
            self.c_values.clone(),
        )
    }

    pub fn admm(&self) -> AdmmConfig {
        AdmmConfig {
            rho: self.rho,
            max_iters: self.max_iters,
            primal_tol: self.primal_tol,
            change_tol: self.change_tol,
            ..AdmmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_spec(self.seed).validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("methods must not be empty".into()));
        }
        if self.n0 < 2 || self.n1 < 2 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "n0, n1 must be at least 2 and n_val, n_test at least 1".into(),
            ));
        }
        if !(self.lambda_tilde_step > 0.0) || self.lambda_tilde_min > self.lambda_tilde_max {
            return Err(Error::InvalidParameter("invalid lambda_tilde range".into()));
        }
        if self.mode == ParameterMode::Fixed && !(self.c > 0.0 && self.lambda_tilde > 0.0) {
            return Err(Error::InvalidParameter("fixed mode needs positive c and lambda_tilde".into()));
        }
        self.grid().validate()?;
        self.admm().validate()
    }
}

/// One point of a tuning curve, with truth-based metrics attached.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub replicate: usize,
    pub method: String,
    pub c: f64,
    pub lambda_tilde: f64,
    pub val_error: Option<f64>,
    pub pop_risk: Option<f64>,
    pub l2_err: Option<f64>,
    pub tau_hat: Option<f64>,
    pub iterations: usize,
}

/// Solver residual history of a replicate-0 refit.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub method: String,
    pub iteration: usize,
    pub primal_residual: f64,
    pub best_residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<Failure>,
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<CurveRow>,
    pub traces: Vec<TraceRecord>,
}

struct ReplicateData {
    model: GaussianModel,
    stats: SuffStats,
    val0: DMatrix<f64>,
    val1: DMatrix<f64>,
    test0: DMatrix<f64>,
    test1: DMatrix<f64>,
}

fn draw(cfg: &ExperimentConfig, seed: u64) -> Result<ReplicateData> {
    let model = build_model(&cfg.sim_spec(seed))?;
    let (x0, x1) = sample(&model, cfg.n0, cfg.n1, stream_seed(seed, 1))?;
    let (val0, val1) = sample(&model, cfg.n_val, cfg.n_val, stream_seed(seed, 2))?;
    let (test0, test1) = sample(&model, cfg.n_test, cfg.n_test, stream_seed(seed, 3))?;
    let stats = compute_suff_stats(&x0, &x1)?;
    Ok(ReplicateData {
        model,
        stats,
        val0,
        val1,
        test0,
        test1,
    })
}

/// Population risk, with `0.5` for a zero direction.
pub fn risk_or_half(rule: &LinearRule, model: &GaussianModel) -> Result<f64> {
    match population_risk(rule, model) {
        Err(Error::DegenerateRule) => Ok(0.5),
        other => other,
    }
}

struct MethodResult {
    row: MetricsRow,
    curve: Vec<CurveRow>,
    trace: Vec<TraceRecord>,
}

/// The chosen fit and its parameters.
struct Chosen {
    fit: FitResult,
    c: f64,
    lambda: f64,
    lambda_tilde: Option<f64>,
    curve: Vec<CurveRow>,
}

fn choose(
    cfg: &ExperimentConfig,
    method: Method,
    data: &ReplicateData,
    replicate: usize,
    admm: &AdmmConfig,
) -> Result<Chosen> {
    let stats = &data.stats;
    let rate = stats.rate();
    let is_panda = matches!(method, Method::Panda | Method::KPanda);
    match cfg.mode {
        ParameterMode::Fixed => {
            let lambda = cfg.lambda_tilde * rate;
            let fit = fit_method(method, stats, cfg.c, lambda, admm, None)?;
            Ok(Chosen {
                fit,
                c: cfg.c,
                lambda,
                lambda_tilde: Some(cfg.lambda_tilde),
                curve: Vec::new(),
            })
        }
        ParameterMode::Theoretical if is_panda => {
            let (c, lambda) = theoretical_defaults(stats);
            let fit = fit_method(method, stats, c, lambda, admm, None)?;
            Ok(Chosen {
                fit,
                c,
                lambda,
                lambda_tilde: Some(lambda / rate),
                curve: Vec::new(),
            })
        }
        _ => {
            let grid = cfg.grid();
            let out = grid_search(stats, &data.val0, &data.val1, method, &grid, admm, cfg.warm_start)?;
            let curve = if cfg.write_curve {
                out.curve
                    .iter()
                    .map(|pt| {
                        let rule = pt
                            .beta_hat
                            .as_ref()
                            .map(|b| LinearRule::new(stats.mu_hat_m.clone(), b.clone()));
                        CurveRow {
                            replicate,
                            method: method.to_string(),
                            c: pt.c,
                            lambda_tilde: pt.lambda_tilde,
                            val_error: pt.val_error,
                            pop_risk: rule.as_ref().and_then(|r| risk_or_half(r, &data.model).ok()),
                            l2_err: pt.beta_hat.as_ref().map(|b| (b - data.model.beta_star()).norm()),
                            tau_hat: pt.tau_hat,
                            iterations: pt.iterations,
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Ok(Chosen {
                c: out.best_c,
                lambda: out.best_lambda_tilde * rate,
                lambda_tilde: Some(out.best_lambda_tilde),
                fit: out.best_fit,
                curve,
            })
        }
    }
}

fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    data: &ReplicateData,
    replicate: usize,
    seed: u64,
) -> Result<MethodResult> {
    let start = Instant::now();
    let admm = cfg.admm();
    let model = &data.model;
    let beta_star = model.beta_star();
    let mut row = MetricsRow {
        replicate,
        seed,
        method: method.to_string(),
        model: cfg.model.to_string(),
        p: cfg.p,
        s: cfg.sim_spec(seed).support_size(),
        n: cfg.n0.min(cfg.n1),
        c: None,
        lambda_tilde: None,
        l1_err: 0.0,
        l2_err: 0.0,
        tau_rel_err: None,
        pop_risk: 0.0,
        test_err: 0.0,
        tp: 0.0,
        tn: 0.0,
        precision: 0.0,
        recall: 0.0,
        auc: 0.0,
        nnz: 0,
        iterations: 0,
        status: SolveStatus::Converged.to_string(),
        wall_time_s: 0.0,
    };
    let mut curve = Vec::new();
    let mut trace = Vec::new();

    let (rule, beta_hat) = if method == Method::Bayes {
        let rule = model.bayes_rule();
        row.test_err = empirical_error(&rule, &data.test0, &data.test1)?;
        (rule, beta_star.clone())
    } else {
        let chosen = choose(cfg, method, data, replicate, &admm)?;
        curve = chosen.curve;
        row.lambda_tilde = chosen.lambda_tilde;
        if matches!(method, Method::Panda | Method::KPanda) {
            row.c = Some(chosen.c);
        }
        row.iterations = chosen.fit.solver.iterations;
        row.status = chosen.fit.solver.status.to_string();
        if let Some(tau) = chosen.fit.tau_hat {
            row.tau_rel_err = Some(tau_relative_error(tau, model.delta())?);
        }
        if cfg.write_trace && replicate == 0 {
            let traced = AdmmConfig {
                trace_every: cfg.trace_every.max(1),
                ..admm
            };
            trace = trace_of(method, &data.stats, chosen.c, chosen.lambda, &traced)?;
        }
        if method == Method::KPanda {
            let means = [data.stats.mu_hat0.clone(), data.stats.mu_hat1.clone()];
            let kfit = kclass_panda_fit_stats(&data.stats, &means, &[chosen.c], chosen.lambda, &admm, None)?;
            let mut wrong = 0;
            for (x, label) in [(&data.test0, 1), (&data.test1, 2)] {
                for i in 0..x.nrows() {
                    let z: Vec<f64> = x.row(i).iter().copied().collect();
                    wrong += usize::from(kclass_classify(&kfit, &z)? != label);
                }
            }
            row.test_err = wrong as f64 / (data.test0.nrows() + data.test1.nrows()) as f64;
            let beta = kfit.betas[0].clone();
            (LinearRule::new(data.stats.mu_hat_m.clone(), beta.clone()), beta)
        } else {
            row.test_err = empirical_error(&chosen.fit.rule, &data.test0, &data.test1)?;
            (chosen.fit.rule, chosen.fit.beta_hat)
        }
    };

    let (l1, l2) = estimation_errors(&beta_hat, beta_star)?;
    row.l1_err = l1;
    row.l2_err = l2;
    row.pop_risk = risk_or_half(&rule, model)?;
    let sel = variable_selection(&beta_hat, beta_star, cfg.selection_threshold)?;
    row.tp = sel.tp as f64;
    row.tn = sel.tn as f64;
    row.precision = sel.precision;
    row.recall = sel.recall;
    row.nnz = beta_hat.iter().filter(|b| b.abs() > cfg.selection_threshold).count();
    row.auc = if beta_hat.iter().all(|b| *b == 0.0) {
        auc_scores(&[0.0], &[0.0])?
    } else {
        auc(&rule, &data.test0, &data.test1)?
    };
    row.wall_time_s = start.elapsed().as_secs_f64();
    Ok(MethodResult { row, curve, trace })
}

fn trace_of(method: Method, stats: &SuffStats, c: f64, lambda: f64, admm: &AdmmConfig) -> Result<Vec<TraceRecord>> {
    use crate::solver::{assemble_linf_program, assemble_lpd_program, assemble_panda_program, solve};
    // AdaLDA's trace is that of its second stage
    let program = match method {
        Method::Panda | Method::KPanda => assemble_panda_program(stats, c, lambda)?,
        Method::Lpd => assemble_lpd_program(stats, lambda)?,
        Method::AdaLda => {
            let fit = fit_method(method, stats, c, lambda, admm, None)?;
            let delta = fit.delta_hat.unwrap_or(0.0);
            let bound = 4.0 * stats.sigma_hat_max * stats.rate() * (lambda * delta * delta + 1.0).sqrt();
            assemble_linf_program(stats, bound, lambda)?
        }
        Method::Bayes => return Ok(Vec::new()),
    };
    let sol = solve(&program, admm, None)?;
    Ok(sol
        .trace
        .iter()
        .map(|t| TraceRecord {
            method: method.to_string(),
            iteration: t.iteration,
            primal_residual: t.primal_residual,
            best_residual: t.best_residual,
            objective: t.objective,
        })
        .collect())
}

type ReplicateResult = (Vec<MethodResult>, Vec<Failure>);

fn run_one(cfg: &ExperimentConfig, replicate: usize) -> Result<ReplicateResult> {
    let seed = cfg.seed.wrapping_add(replicate as u64);
    let data = draw(cfg, seed)?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &method in &cfg.methods {
        match run_method(cfg, method, &data, replicate, seed) {
            Ok(res) => results.push(res),
            Err(e) => {
                log::warn!("replicate {replicate} {method}: {e}");
                failures.push(Failure {
                    replicate,
                    method: method.to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    log::info!("replicate {replicate} (seed {seed}) done");
    Ok((results, failures))
}

/// Runs all replicates (in parallel over `cfg.jobs` threads) and aggregates.
/// A failing fit is recorded and excluded from the aggregates.
pub fn run_replicates(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let per_replicate: Vec<Result<ReplicateResult>> =
        pool.install(|| (0..cfg.replicates).into_par_iter().map(|r| run_one(cfg, r)).collect());
    let mut out = ExperimentOutput::default();
    for res in per_replicate {
        let (results, failures) = res?;
        for m in results {
            out.rows.push(m.row);
            out.curves.extend(m.curve);
            out.traces.extend(m.trace);
        }
        out.failures.extend(failures);
    }
    out.summary = aggregate(&out.rows, &out.failures);
    Ok(out)
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, Serialize)]
pub struct OutputFiles {
    pub rows: PathBuf,
    pub summary: PathBuf,
    pub timing: PathBuf,
    pub curve: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub failures: Option<PathBuf>,
    pub manifest: PathBuf,
}

pub fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TimingRow<'a> {
    replicate: usize,
    method: &'a str,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    files: &'a OutputFiles,
    failures: usize,
}

/// Writes `<prefix>_rows.csv`, `_summary.csv`, `_timing.csv`, the optional
/// `_curve.csv`, `_trace.csv` and `_failures.csv`, and `run_manifest.json`
/// next to them.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<OutputFiles> {
    let prefix = &cfg.output;
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let files = OutputFiles {
        rows: prefixed(prefix, "_rows.csv"),
        summary: prefixed(prefix, "_summary.csv"),
        timing: prefixed(prefix, "_timing.csv"),
        curve: cfg.write_curve.then(|| prefixed(prefix, "_curve.csv")),
        trace: cfg.write_trace.then(|| prefixed(prefix, "_trace.csv")),
        failures: (!out.failures.is_empty()).then(|| prefixed(prefix, "_failures.csv")),
        manifest: prefix.with_file_name("run_manifest.json"),
    };
    write_csv(&files.rows, &out.rows)?;
    write_csv(&files.summary, &out.summary)?;
    let timing: Vec<TimingRow> = out
        .rows
        .iter()
        .map(|r| TimingRow {
            replicate: r.replicate,
            method: &r.method,
            wall_time_s: r.wall_time_s,
        })
        .collect();
    write_csv(&files.timing, &timing)?;
    if let Some(path) = &files.curve {
        write_csv(path, &out.curves)?;
    }
    if let Some(path) = &files.trace {
        write_csv(path, &out.traces)?;
    }
    if let Some(path) = &files.failures {
        write_csv(path, &out.failures)?;
    }
    let manifest = Manifest {
        tool: "panda",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
        files: &files,
        failures: out.failures.len(),
    };
    fs::write(&files.manifest, serde_json::to_string_pretty(&manifest)?)?;
    Ok(files)
}

/// Reads the `config` object back out of a `run_manifest.json`.
pub fn config_from_manifest(path: &Path) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let config = value
        .get("config")
        .ok_or_else(|| Error::InvalidInput(format!("{} has no config object", path.display())))?;
    Ok(serde_json::from_value(config.clone())?)
}

/// Empirical error of `rule` on `n` fresh draws per class.
pub fn monte_carlo_error(model: &GaussianModel, rule: &LinearRule, n: usize, seed: u64) -> Result<f64> {
    let (x0, x1) = sample(model, n, n, seed)?;
    empirical_error(rule, &x0, &x1)
}
