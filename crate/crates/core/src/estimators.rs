//! PANDA, LPD, AdaLDA and K-class PANDA estimators.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{centered_scatter, column_means, from_moments, LinearRule, SuffStats};
use crate::solver::{
    assemble_adalda_stage1_program, assemble_linf_program, assemble_lpd_program, assemble_panda_for, solve,
    AdmmConfig, AdmmState, ConicProgram, Solution, SolveStatus,
};

/// Solver outcome attached to a fit.
#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub objective: f64,
}

impl From<&Solution> for SolverSummary {
    fn from(sol: &Solution) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            objective: sol.objective,
        }
    }
}

/// Solver states from a previous fit, reused as initial iterates.
#[derive(Debug, Clone, Default)]
pub struct WarmStart(pub Vec<AdmmState>);

impl WarmStart {
    fn get(&self, k: usize) -> Option<&AdmmState> {
        self.0.get(k)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// PANDA's estimate of `Δ`.
    pub tau_hat: Option<f64>,
    /// AdaLDA's first-stage estimate `√|β̃ᵀμ̂d|`.
    pub delta_hat: Option<f64>,
    /// `(μ̂m, β̂)`.
    pub rule: LinearRule,
    /// Summary of the last program solved (stage 2 for AdaLDA).
    pub solver: SolverSummary,
    /// Whether `√(β̂ᵀΣ̂β̂) = τ̂` holds at the optimum (PANDA only).
    pub soc_active: Option<bool>,
    pub warm: WarmStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Panda,
    Lpd,
    AdaLda,
    /// K-class PANDA (binary data is treated as K = 2).
    KPanda,
    /// Population Bayes rule; only meaningful when the model is known.
    Bayes,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Panda, Method::Lpd, Method::AdaLda, Method::KPanda, Method::Bayes];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Panda => "panda",
            Method::Lpd => "lpd",
            Method::AdaLda => "adalda",
            Method::KPanda => "kpanda",
            Method::Bayes => "bayes",
        }
    }

    /// Methods whose fit takes a `λ` (tunable over the `λ̃` grid).
    pub fn is_tunable(&self) -> bool {
        matches!(self, Method::Panda | Method::Lpd | Method::AdaLda | Method::KPanda)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

/// `c = 1/(8(‖μ̂d‖∞ + 4σ̂max√(log p/n)))` and `λ = 20√(log p/n)`.
pub fn theoretical_defaults(stats: &SuffStats) -> (f64, f64) {
    theoretical_defaults_for(stats, &stats.mu_hat_d)
}

fn theoretical_defaults_for(stats: &SuffStats, mu_d: &DVector<f64>) -> (f64, f64) {
    let rate = stats.rate();
    let c = 1.0 / (8.0 * (mu_d.amax() + 4.0 * stats.sigma_hat_max * rate));
    (c, 20.0 * rate)
}

fn finish_solve(program: &ConicProgram, cfg: &AdmmConfig, init: Option<&AdmmState>) -> Result<Solution> {
    let sol = solve(program, cfg, init)?;
    if sol.status == SolveStatus::Diverged {
        return Err(Error::SolverDiverged {
            iterations: sol.iterations,
        });
    }
    if sol.status == SolveStatus::MaxIters {
        log::debug!(
            "solver stopped at max_iters with residual {:.3e}",
            sol.primal_residual
        );
    }
    Ok(sol)
}

/// PANDA: `min ‖β‖₁ + cτ²` subject to the `(τ+1)`-scaled ∞-norm bound and
/// `√(βᵀΣ̂β) ≤ τ`.
pub fn panda_fit(stats: &SuffStats, c: f64, lambda: f64, cfg: &AdmmConfig) -> Result<FitResult> {
    panda_fit_warm(stats, c, lambda, cfg, None)
}

pub fn panda_fit_warm(
    stats: &SuffStats,
    c: f64,
    lambda: f64,
    cfg: &AdmmConfig,
    warm: Option<&WarmStart>,
) -> Result<FitResult> {
    panda_fit_for(stats, &stats.mu_hat_d, &stats.mu_hat_m, c, lambda, cfg, warm)
}

fn panda_fit_for(
    stats: &SuffStats,
    mu_d: &DVector<f64>,
    alpha: &DVector<f64>,
    c: f64,
    lambda: f64,
    cfg: &AdmmConfig,
    warm: Option<&WarmStart>,
) -> Result<FitResult> {
    let program = assemble_panda_for(stats, mu_d, c, lambda)?;
    let sol = finish_solve(&program, cfg, warm.and_then(|w| w.get(0)))?;
    let beta_hat = sol.beta_hat.clone();

    // Raise τ̂ to the smallest value that makes the returned β̂ exactly
    // feasible; this only absorbs the solver's residual.
    let quad = beta_hat.dot(&(&stats.sigma_hat * &beta_hat)).max(0.0).sqrt();
    let mut tau_hat = sol.tau_hat.max(quad).max(0.0);
    let scale = lambda * stats.sigma_hat_max;
    if scale > 0.0 {
        let excess = (&stats.sigma_hat * &beta_hat - mu_d).amax();
        tau_hat = tau_hat.max(excess / scale - 1.0);
    }
    let mut solver = SolverSummary::from(&sol);
    solver.objective = program.objective(&beta_hat, tau_hat);
    let soc_active = (quad - tau_hat).abs() <= 1e-4 * (1.0 + tau_hat);
    Ok(FitResult {
        rule: LinearRule::new(alpha.clone(), beta_hat.clone()),
        beta_hat,
        tau_hat: Some(tau_hat),
        delta_hat: None,
        solver,
        soc_active: Some(soc_active),
        warm: WarmStart(vec![sol.state]),
    })
}

/// LPD: `min ‖β‖₁ s.t. ‖Σ̂β − μ̂d‖∞ ≤ λσ̂max`.
pub fn lpd_fit(stats: &SuffStats, lambda: f64, cfg: &AdmmConfig) -> Result<FitResult> {
    lpd_fit_warm(stats, lambda, cfg, None)
}

pub fn lpd_fit_warm(
    stats: &SuffStats,
    lambda: f64,
    cfg: &AdmmConfig,
    warm: Option<&WarmStart>,
) -> Result<FitResult> {
    let program = assemble_lpd_program(stats, lambda)?;
    let sol = finish_solve(&program, cfg, warm.and_then(|w| w.get(0)))?;
    Ok(FitResult {
        rule: LinearRule::new(stats.mu_hat_m.clone(), sol.beta_hat.clone()),
        beta_hat: sol.beta_hat.clone(),
        tau_hat: None,
        delta_hat: None,
        solver: SolverSummary::from(&sol),
        soc_active: None,
        warm: WarmStart(vec![sol.state]),
    })
}

/// Two-stage AdaLDA. Stage 1 estimates `Δ̂ = √|β̃ᵀμ̂d|`; stage 2 solves the
/// ∞-norm program with bound `4σ̂max√(log p/n)·√(λΔ̂² + 1)`.
pub fn adalda_fit(stats: &SuffStats, lambda: f64, cfg: &AdmmConfig) -> Result<FitResult> {
    adalda_fit_warm(stats, lambda, cfg, None)
}

pub fn adalda_fit_warm(
    stats: &SuffStats,
    lambda: f64,
    cfg: &AdmmConfig,
    warm: Option<&WarmStart>,
) -> Result<FitResult> {
    let (stage1, sol1) = adalda_stage1(stats, lambda, cfg, warm)?;
    let beta_tilde = &sol1.beta_hat;
    let delta_hat = beta_tilde.dot(&stats.mu_hat_d).abs().sqrt();
    let kappa = 4.0 * stats.sigma_hat_max * stats.rate();
    let bound = kappa * (lambda * delta_hat * delta_hat + 1.0).sqrt();
    let stage2 = assemble_linf_program(stats, bound, lambda)?;
    let sol2 = finish_solve(&stage2, cfg, warm.and_then(|w| w.get(1)))?;
    log::trace!(
        "adalda stage 1 objective {:.6} ({} rows), stage 2 objective {:.6}",
        sol1.objective,
        stage1.rows(),
        sol2.objective
    );
    Ok(FitResult {
        rule: LinearRule::new(stats.mu_hat_m.clone(), sol2.beta_hat.clone()),
        beta_hat: sol2.beta_hat.clone(),
        tau_hat: None,
        delta_hat: Some(delta_hat),
        solver: SolverSummary::from(&sol2),
        soc_active: None,
        warm: WarmStart(vec![sol1.state, sol2.state]),
    })
}

/// AdaLDA's first stage on its own; `Err(EstimatorInfeasible)` when the
/// solver cannot reach feasibility.
pub fn adalda_stage1(
    stats: &SuffStats,
    lambda: f64,
    cfg: &AdmmConfig,
    warm: Option<&WarmStart>,
) -> Result<(ConicProgram, Solution)> {
    let program = assemble_adalda_stage1_program(stats, lambda)?;
    let sol = finish_solve(&program, cfg, warm.and_then(|w| w.get(0)))?;
    if sol.status != SolveStatus::Converged && sol.primal_residual > 100.0 * cfg.primal_tol {
        return Err(Error::EstimatorInfeasible(format!(
            "AdaLDA stage 1 did not reach feasibility (relative residual {:.3e} after {} iterations)",
            sol.primal_residual, sol.iterations
        )));
    }
    Ok((program, sol))
}

/// K-class PANDA fit: one direction per class `k ≥ 2` against class 1.
#[derive(Debug, Clone)]
pub struct KClassFit {
    pub betas: Vec<DVector<f64>>,
    pub taus: Vec<f64>,
    pub mu_hats: Vec<DVector<f64>>,
    pub priors: Vec<f64>,
    pub solvers: Vec<SolverSummary>,
}

impl KClassFit {
    pub fn classes(&self) -> usize {
        self.mu_hats.len()
    }
}

/// Pooled statistics over all classes, with class 1 as the reference.
pub fn kclass_stats(class_samples: &[DMatrix<f64>]) -> Result<(SuffStats, Vec<DVector<f64>>)> {
    if class_samples.len() < 2 {
        return Err(Error::InvalidInput("K-class fit needs at least two classes".into()));
    }
    let p = class_samples[0].ncols();
    for (k, x) in class_samples.iter().enumerate() {
        if x.ncols() != p {
            return Err(Error::InvalidInput(format!("class {} has {} columns, expected {p}", k + 1, x.ncols())));
        }
        if x.nrows() < 2 {
            return Err(Error::InsufficientData {
                class: (k + 1).to_string(),
                needed: 2,
                got: x.nrows(),
            });
        }
    }
    let means: Vec<DVector<f64>> = class_samples.iter().map(column_means).collect();
    let total: usize = class_samples.iter().map(|x| x.nrows()).sum();
    let mut pooled = DMatrix::zeros(p, p);
    for (x, m) in class_samples.iter().zip(&means) {
        pooled += centered_scatter(x, m);
    }
    pooled /= total as f64;
    linalg::symmetrize(&mut pooled);
    let n_min = class_samples.iter().map(|x| x.nrows()).min().unwrap_or(0);
    let mut base = from_moments(
        means[0].clone(),
        means[1].clone(),
        pooled,
        class_samples[0].nrows(),
        class_samples[1].nrows(),
    )?;
    base.n = n_min;
    Ok((base, means))
}

/// Per-class theoretical `c_k = 1/(8(‖μ̂⁽ᵏ⁾ − μ̂⁽¹⁾‖∞ + 4σ̂max√(log p/n)))`.
pub fn kclass_theoretical_c(stats: &SuffStats, means: &[DVector<f64>]) -> Vec<f64> {
    means[1..]
        .iter()
        .map(|m| theoretical_defaults_for(stats, &(m - &means[0])).0)
        .collect()
}

pub fn kclass_panda_fit(
    class_samples: &[DMatrix<f64>],
    c_list: &[f64],
    lambda: f64,
    cfg: &AdmmConfig,
    priors: Option<&[f64]>,
) -> Result<KClassFit> {
    let (stats, means) = kclass_stats(class_samples)?;
    kclass_panda_fit_stats(&stats, &means, c_list, lambda, cfg, priors)
}

/// K-class fit from precomputed pooled statistics.
pub fn kclass_panda_fit_stats(
    stats: &SuffStats,
    means: &[DVector<f64>],
    c_list: &[f64],
    lambda: f64,
    cfg: &AdmmConfig,
    priors: Option<&[f64]>,
) -> Result<KClassFit> {
    let k = means.len();
    if c_list.len() != k - 1 {
        return Err(Error::InvalidParameter(format!(
            "expected {} values of c, got {}",
            k - 1,
            c_list.len()
        )));
    }
    let priors = match priors {
        Some(pr) => {
            let total: f64 = pr.iter().sum();
            if pr.len() != k || pr.iter().any(|x| !(*x > 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("priors must be K positive values summing to 1".into()));
            }
            pr.to_vec()
        }
        None => vec![1.0 / k as f64; k],
    };
    let fits: Vec<Result<FitResult>> = (1..k)
        .into_par_iter()
        .map(|j| {
            let mu_d = &means[j] - &means[0];
            let alpha = (&means[j] + &means[0]) * 0.5;
            panda_fit_for(stats, &mu_d, &alpha, c_list[j - 1], lambda, cfg, None)
        })
        .collect();
    let mut betas = Vec::with_capacity(k - 1);
    let mut taus = Vec::with_capacity(k - 1);
    let mut solvers = Vec::with_capacity(k - 1);
    for fit in fits {
        let fit = fit?;
        betas.push(fit.beta_hat);
        taus.push(fit.tau_hat.unwrap_or(0.0));
        solvers.push(fit.solver);
    }
    Ok(KClassFit {
        betas,
        taus,
        mu_hats: means.to_vec(),
        priors,
        solvers,
    })
}

/// `argmax_k D̂_k` with `D̂₁ = 0` and
/// `D̂_k = (z − (μ̂⁽¹⁾+μ̂⁽ᵏ⁾)/2)ᵀβ̂⁽ᵏ⁾ + log(π_k/π₁)`; labels are `1..=K`,
/// ties go to the smallest label.
pub fn kclass_classify(fit: &KClassFit, z: &[f64]) -> Result<usize> {
    let p = fit.mu_hats[0].len();
    if z.len() != p {
        return Err(Error::InvalidInput(format!("point has {} coordinates, expected {p}", z.len())));
    }
    let mut best = (1, 0.0);
    for (j, beta) in fit.betas.iter().enumerate() {
        let k = j + 1;
        let score: f64 = (0..p)
            .map(|i| (z[i] - 0.5 * (fit.mu_hats[0][i] + fit.mu_hats[k][i])) * beta[i])
            .sum::<f64>()
            + (fit.priors[k] / fit.priors[0]).ln();
        if score > best.1 {
            best = (k + 1, score);
        }
    }
    Ok(best.0)
}
