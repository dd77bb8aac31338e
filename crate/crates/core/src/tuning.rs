//! Validation-set grid search over `λ̃` (and optionally `c`), with
//! `λ = λ̃·√(log p / n)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{adalda_fit_warm, lpd_fit_warm, panda_fit_warm, FitResult, Method, WarmStart};
use crate::evaluation::empirical_error;
use crate::model::SuffStats;
use crate::solver::AdmmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub lambda_tilde_values: Vec<f64>,
    pub c_values: Vec<f64>,
}

impl Default for TuneGrid {
    /// `λ̃ ∈ {0.1, 0.2, …, 8.0}`, `c = 20`.
    fn default() -> Self {
        Self::range(0.1, 8.0, 0.1, vec![20.0])
    }
}

impl TuneGrid {
    /// `start, start+step, …` up to `stop` (inclusive, up to rounding).
    pub fn range(start: f64, stop: f64, step: f64, c_values: Vec<f64>) -> Self {
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let lambda_tilde_values = (0..count)
            .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
            .collect();
        Self {
            lambda_tilde_values,
            c_values,
        }
    }

    pub fn single(lambda_tilde: f64, c: f64) -> Self {
        Self {
            lambda_tilde_values: vec![lambda_tilde],
            c_values: vec![c],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [("lambda_tilde_values", &self.lambda_tilde_values), ("c_values", &self.c_values)] {
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} is empty")));
            }
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite")));
            }
            if values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter(format!("{name} must be strictly ascending")));
            }
        }
        Ok(())
    }
}

/// Fits `method` at `λ` on training statistics. `KPanda` on two classes is
/// binary PANDA.
pub fn fit_method(
    method: Method,
    stats: &SuffStats,
    c: f64,
    lambda: f64,
    cfg: &AdmmConfig,
    warm: Option<&WarmStart>,
) -> Result<FitResult> {
    match method {
        Method::Panda | Method::KPanda => panda_fit_warm(stats, c, lambda, cfg, warm),
        Method::Lpd => lpd_fit_warm(stats, lambda, cfg, warm),
        Method::AdaLda => adalda_fit_warm(stats, lambda, cfg, warm),
        Method::Bayes => Err(Error::InvalidParameter("the Bayes rule has no tuning parameter".into())),
    }
}

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub c: f64,
    pub lambda_tilde: f64,
    /// `None` when the fit failed.
    pub val_error: Option<f64>,
    pub beta_hat: Option<DVector<f64>>,
    pub tau_hat: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best_lambda_tilde: f64,
    pub best_c: f64,
    pub best_fit: FitResult,
    pub curve: Vec<CurvePoint>,
}

impl TuneOutcome {
    pub fn best_val_error(&self) -> f64 {
        self.curve
            .iter()
            .find(|p| p.c == self.best_c && p.lambda_tilde == self.best_lambda_tilde)
            .and_then(|p| p.val_error)
            .unwrap_or(f64::NAN)
    }
}

fn evaluate(
    fit: Result<FitResult>,
    c: f64,
    lambda_tilde: f64,
    val0: &DMatrix<f64>,
    val1: &DMatrix<f64>,
) -> (CurvePoint, Option<FitResult>) {
    match fit.and_then(|f| empirical_error(&f.rule, val0, val1).map(|e| (f, e))) {
        Ok((fit, err)) => (
            CurvePoint {
                c,
                lambda_tilde,
                val_error: Some(err),
                beta_hat: Some(fit.beta_hat.clone()),
                tau_hat: fit.tau_hat,
                iterations: fit.solver.iterations,
                error: None,
            },
            Some(fit),
        ),
        Err(e) => (
            CurvePoint {
                c,
                lambda_tilde,
                val_error: None,
                beta_hat: None,
                tau_hat: None,
                iterations: 0,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

/// Fits every grid point on `stats` and picks the one with the smallest
/// validation misclassification; ties go to the smaller `λ̃` (then the
/// earlier `c`). With `warm_start` the `λ̃` path for each `c` is solved in
/// ascending order from the previous solution; otherwise points run in
/// parallel from cold starts.
pub fn grid_search(
    stats: &SuffStats,
    val0: &DMatrix<f64>,
    val1: &DMatrix<f64>,
    method: Method,
    grid: &TuneGrid,
    cfg: &AdmmConfig,
    warm_start: bool,
) -> Result<TuneOutcome> {
    grid.validate()?;
    if val0.nrows() == 0 || val1.nrows() == 0 {
        return Err(Error::InvalidInput("validation set needs samples from both classes".into()));
    }
    if !method.is_tunable() {
        return Err(Error::InvalidParameter(format!("method {method} is not tunable")));
    }
    let rate = stats.rate();
    // only PANDA depends on c
    let c_values: &[f64] = if matches!(method, Method::Panda | Method::KPanda) {
        &grid.c_values
    } else {
        &grid.c_values[..1]
    };
    let mut points: Vec<(CurvePoint, Option<FitResult>)> = Vec::new();
    for &c in c_values {
        if warm_start {
            let mut warm: Option<WarmStart> = None;
            for &lt in &grid.lambda_tilde_values {
                let fit = fit_method(method, stats, c, lt * rate, cfg, warm.as_ref());
                if let Ok(f) = &fit {
                    warm = Some(f.warm.clone());
                }
                points.push(evaluate(fit, c, lt, val0, val1));
            }
        } else {
            let batch: Vec<_> = grid
                .lambda_tilde_values
                .par_iter()
                .map(|&lt| evaluate(fit_method(method, stats, c, lt * rate, cfg, None), c, lt, val0, val1))
                .collect();
            points.extend(batch);
        }
    }

    let mut best: Option<usize> = None;
    for (k, (pt, _)) in points.iter().enumerate() {
        let Some(err) = pt.val_error else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let (bp, _) = &points[b];
                let be = bp.val_error.unwrap_or(f64::INFINITY);
                err < be || (err == be && pt.lambda_tilde < bp.lambda_tilde)
            }
        };
        if better {
            best = Some(k);
        }
    }
    let Some(best) = best else {
        let diagnostics: Vec<String> = points
            .iter()
            .map(|(p, _)| {
                format!(
                    "c={} λ̃={}: {}",
                    p.c,
                    p.lambda_tilde,
                    p.error.as_deref().unwrap_or("unknown")
                )
            })
            .collect();
        return Err(Error::TuningFailed(diagnostics.join("; ")));
    };
    let (best_c, best_lambda_tilde) = (points[best].0.c, points[best].0.lambda_tilde);
    let best_fit = points[best].1.take().expect("successful point keeps its fit");
    let curve = points.into_iter().map(|(p, _)| p).collect();
    Ok(TuneOutcome {
        best_lambda_tilde,
        best_c,
        best_fit,
        curve,
    })
}
