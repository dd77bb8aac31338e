//! Browser bindings. Every entry point takes plain numbers and strings and
//! returns a JSON document, so the page needs no generated types.

use nalgebra::DMatrix;
use panda::datagen::{build_model, sample, stream_seed, ModelKind, SimSpec};
use panda::estimators::{Method, WarmStart};
use panda::model::{compute_suff_stats, population_risk, GaussianModel, SuffStats};
use panda::solver::AdmmConfig;
use panda::tuning::fit_method;
use panda::evaluation::empirical_error;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Looser than the library defaults so a curve redraws quickly.
fn admm() -> AdmmConfig {
    AdmmConfig {
        max_iters: 5_000,
        primal_tol: 1e-4,
        change_tol: 1e-6,
        ..AdmmConfig::default()
    }
}

struct Problem {
    model: GaussianModel,
    stats: SuffStats,
    val0: DMatrix<f64>,
    val1: DMatrix<f64>,
}

fn problem(model: &str, p: usize, s: usize, n: usize, seed: u64) -> Result<Problem, String> {
    let kind: ModelKind = model.parse().map_err(|e| format!("{e}"))?;
    if !(2..=300).contains(&p) {
        return Err(format!("p must lie in 2..=300 in the browser, got {p}"));
    }
    let spec = SimSpec::new(kind, p, s, seed);
    spec.validate().map_err(|e| e.to_string())?;
    let model = build_model(&spec).map_err(|e| e.to_string())?;
    let (x0, x1) = sample(&model, n, n, stream_seed(seed, 1)).map_err(|e| e.to_string())?;
    let (val0, val1) = sample(&model, n, n, stream_seed(seed, 2)).map_err(|e| e.to_string())?;
    let stats = compute_suff_stats(&x0, &x1).map_err(|e| e.to_string())?;
    Ok(Problem {
        model,
        stats,
        val0,
        val1,
    })
}

fn method(name: &str) -> Result<Method, String> {
    match name.parse::<Method>().map_err(|e| e.to_string())? {
        m if m.is_tunable() => Ok(m),
        m => Err(format!("{m} cannot be fitted")),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CurvePoint {
    lambda_tilde: f64,
    val_error: f64,
    pop_risk: f64,
    nnz: usize,
}

#[derive(Serialize)]
struct Curve {
    method: String,
    bayes_risk: f64,
    best_lambda_tilde: f64,
    points: Vec<CurvePoint>,
}

/// Validation error and population risk along `λ̃ = step, 2·step, …, max`,
/// warm-started from one grid point to the next.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn tuning_curve(
    model: &str,
    p: usize,
    s: usize,
    n: usize,
    seed: u64,
    method_name: &str,
    c: f64,
    max: f64,
    step: f64,
) -> Result<String, String> {
    to_json(&curve(&problem(model, p, s, n, seed)?, method(method_name)?, c, max, step)?)
}

fn curve(pr: &Problem, m: Method, c: f64, max: f64, step: f64) -> Result<Curve, String> {
    if !(step > 0.0 && max >= step && max / step <= 400.0) {
        return Err("need 0 < step <= max and at most 400 grid points".into());
    }
    let rate = pr.stats.rate();
    let cfg = admm();
    let mut warm: Option<WarmStart> = None;
    let mut points = Vec::new();
    let count = (max / step + 1e-9).floor() as usize;
    for k in 1..=count {
        let lambda_tilde = (k as f64 * step * 1e10).round() / 1e10;
        let fit = fit_method(m, &pr.stats, c, lambda_tilde * rate, &cfg, warm.as_ref())
            .map_err(|e| e.to_string())?;
        points.push(CurvePoint {
            lambda_tilde,
            val_error: empirical_error(&fit.rule, &pr.val0, &pr.val1).map_err(|e| e.to_string())?,
            pop_risk: population_risk(&fit.rule, &pr.model).unwrap_or(0.5),
            nnz: fit.beta_hat.iter().filter(|b| b.abs() > 1e-6).count(),
        });
        warm = Some(fit.warm);
    }
    let best = points
        .iter()
        .fold(None::<&CurvePoint>, |acc, q| match acc {
            Some(a) if a.val_error <= q.val_error => Some(a),
            _ => Some(q),
        })
        .map_or(f64::NAN, |q| q.lambda_tilde);
    Ok(Curve {
        method: m.to_string(),
        bayes_risk: pr.model.bayes_risk(),
        best_lambda_tilde: best,
        points,
    })
}

#[derive(Serialize)]
struct MethodFit {
    method: String,
    beta_hat: Vec<f64>,
    tau_hat: Option<f64>,
    pop_risk: f64,
    val_error: f64,
    nnz: usize,
    iterations: usize,
    status: String,
}

#[derive(Serialize)]
struct Fits {
    beta_star: Vec<f64>,
    delta: f64,
    bayes_risk: f64,
    fits: Vec<MethodFit>,
}

/// Fits each listed method (comma separated) at one `λ̃` and returns the
/// coefficients next to `β*`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn fit_methods(
    model: &str,
    p: usize,
    s: usize,
    n: usize,
    seed: u64,
    methods: &str,
    c: f64,
    lambda_tilde: f64,
) -> Result<String, String> {
    let list = methods
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(method)
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err("no methods given".into());
    }
    let pr = problem(model, p, s, n, seed)?;
    let lambda = lambda_tilde * pr.stats.rate();
    let cfg = admm();
    let mut fits = Vec::new();
    for m in list {
        let fit = fit_method(m, &pr.stats, c, lambda, &cfg, None).map_err(|e| e.to_string())?;
        fits.push(MethodFit {
            method: m.to_string(),
            tau_hat: fit.tau_hat,
            pop_risk: population_risk(&fit.rule, &pr.model).unwrap_or(0.5),
            val_error: empirical_error(&fit.rule, &pr.val0, &pr.val1).map_err(|e| e.to_string())?,
            nnz: fit.beta_hat.iter().filter(|b| b.abs() > 1e-6).count(),
            iterations: fit.solver.iterations,
            status: format!("{:?}", fit.solver.status),
            beta_hat: fit.beta_hat.iter().copied().collect(),
        });
    }
    to_json(&Fits {
        beta_star: pr.model.beta_star().iter().copied().collect(),
        delta: pr.model.delta(),
        bayes_risk: pr.model.bayes_risk(),
        fits,
    })
}

#[derive(Serialize)]
struct CPoint {
    c: f64,
    best_lambda_tilde: f64,
    val_error: f64,
    pop_risk: f64,
}

/// Tuned PANDA risk for each `c` in a comma separated list.
#[wasm_bindgen]
pub fn risk_versus_c(model: &str, p: usize, s: usize, n: usize, seed: u64, c_values: &str) -> Result<String, String> {
    let cs = c_values
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad c value '{t}'")))
        .collect::<Result<Vec<_>, _>>()?;
    let pr = problem(model, p, s, n, seed)?;
    let mut out = Vec::new();
    for c in cs {
        let cv = curve(&pr, Method::Panda, c, 4.0, 0.2)?;
        let best = cv
            .points
            .iter()
            .find(|q| q.lambda_tilde == cv.best_lambda_tilde)
            .ok_or("empty curve")?;
        out.push(CPoint {
            c,
            best_lambda_tilde: best.lambda_tilde,
            val_error: best.val_error,
            pop_risk: best.pop_risk,
        });
    }
    to_json(&out)
}
