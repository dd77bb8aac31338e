//! Linear-constraint form of the discriminant programs:
//!
//! ```text
//! min ‖β‖₁ + c·τ²  s.t.  A_β β + A_u u + A_v v + A_w w + A_τ τ = b,
//!                        u, v ≥ 0,  ‖w‖₂ ≤ τ
//! ```
//!
//! Programs without a second-order-cone block carry an empty `A_w` and a zero
//! `A_τ`; the solver then keeps `τ = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SuffStats;

#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub a_beta: DMatrix<f64>,
    pub a_u: DMatrix<f64>,
    pub a_v: DMatrix<f64>,
    pub a_w: DMatrix<f64>,
    pub a_tau: DVector<f64>,
    pub b: DVector<f64>,
    pub c_penalty: f64,
    pub lambda: f64,
    pub has_soc_block: bool,
}

impl ConicProgram {
    /// Number of `β` coordinates.
    pub fn dim(&self) -> usize {
        self.a_beta.ncols()
    }

    /// Number of equality rows `m`.
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// `A_β β + A_u u + A_v v + A_w w + A_τ τ − b`.
    pub fn residual(
        &self,
        beta: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
        w: &DVector<f64>,
        tau: f64,
    ) -> DVector<f64> {
        let mut r = &self.a_beta * beta + &self.a_u * u + &self.a_v * v - &self.b;
        if self.a_w.ncols() > 0 {
            r += &self.a_w * w;
        }
        r.axpy(tau, &self.a_tau, 1.0);
        r
    }

    pub fn objective(&self, beta: &DVector<f64>, tau: f64) -> f64 {
        beta.lp_norm(1) + self.c_penalty * tau * tau
    }

    fn validate(&self) -> Result<()> {
        let (m, p) = (self.rows(), self.dim());
        let shapes_ok = self.a_beta.nrows() == m
            && self.a_u.shape() == (m, p)
            && self.a_v.shape() == (m, p)
            && self.a_w.nrows() == m
            && self.a_tau.len() == m;
        if !shapes_ok {
            return Err(Error::InvalidInput("conic program blocks have inconsistent shapes".into()));
        }
        if self.b.iter().any(|x| !x.is_finite()) || self.a_beta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("conic program has non-finite data".into()));
        }
        Ok(())
    }

    pub(crate) fn checked(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

/// `I` placed at row offset `offset` of an `m×p` block, scaled by `sign`.
fn placed_identity(m: usize, p: usize, offset: usize, sign: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, p);
    for j in 0..p {
        a[(offset + j, j)] = sign;
    }
    a
}

fn stack3(top: &DMatrix<f64>, mid: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let p = top.ncols();
    let mut out = DMatrix::zeros(top.nrows() + mid.nrows() + bottom.nrows(), p);
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), mid.nrows()).copy_from(mid);
    out.rows_mut(top.nrows() + mid.nrows(), bottom.nrows())
        .copy_from(bottom);
    out
}

/// PANDA program with rows
///
/// ```text
/// Σ̂β − λσ̂max τ·1 + u = μ̂d + λσ̂max·1
/// Σ̂β + λσ̂max τ·1 − v = μ̂d − λσ̂max·1
/// w − Σ̂^{1/2}β       = 0
/// ```
pub fn assemble_panda_program(stats: &SuffStats, c: f64, lambda: f64) -> Result<ConicProgram> {
    assemble_panda_for(stats, &stats.mu_hat_d, c, lambda)
}

/// PANDA program with an arbitrary mean-difference vector (used by the
/// K-class estimator, where it is `μ̂⁽ᵏ⁾ − μ̂⁽¹⁾`).
pub fn assemble_panda_for(
    stats: &SuffStats,
    mu_d: &DVector<f64>,
    c: f64,
    lambda: f64,
) -> Result<ConicProgram> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let p = stats.p;
    let m = 3 * p;
    let scale = lambda * stats.sigma_hat_max;
    let a_beta = stack3(&stats.sigma_hat, &stats.sigma_hat, &(-&stats.sigma_hat_sqrt));
    let a_tau = DVector::from_fn(m, |i, _| match i / p {
        0 => -scale,
        1 => scale,
        _ => 0.0,
    });
    let b = DVector::from_fn(m, |i, _| match i / p {
        0 => mu_d[i] + scale,
        1 => mu_d[i - p] - scale,
        _ => 0.0,
    });
    ConicProgram {
        a_beta,
        a_u: placed_identity(m, p, 0, 1.0),
        a_v: placed_identity(m, p, p, -1.0),
        a_w: placed_identity(m, p, 2 * p, 1.0),
        a_tau,
        b,
        c_penalty: c,
        lambda,
        has_soc_block: true,
    }
    .checked()
}

/// `min ‖β‖₁ s.t. ‖Σ̂β − μ̂d‖∞ ≤ bound` as a two-block slack program.
pub fn assemble_linf_program(stats: &SuffStats, bound: f64, lambda: f64) -> Result<ConicProgram> {
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::InvalidParameter(format!("bound must be nonnegative, got {bound}")));
    }
    let p = stats.p;
    let m = 2 * p;
    let a_beta = stack3(&stats.sigma_hat, &stats.sigma_hat, &DMatrix::zeros(0, p));
    let b = DVector::from_fn(m, |i, _| {
        if i < p {
            stats.mu_hat_d[i] + bound
        } else {
            stats.mu_hat_d[i - p] - bound
        }
    });
    ConicProgram {
        a_beta,
        a_u: placed_identity(m, p, 0, 1.0),
        a_v: placed_identity(m, p, p, -1.0),
        a_w: DMatrix::zeros(m, 0),
        a_tau: DVector::zeros(m),
        b,
        c_penalty: 0.0,
        lambda,
        has_soc_block: false,
    }
    .checked()
}

/// LPD: `min ‖β‖₁ s.t. ‖Σ̂β − μ̂d‖∞ ≤ λσ̂max`.
pub fn assemble_lpd_program(stats: &SuffStats, lambda: f64) -> Result<ConicProgram> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    assemble_linf_program(stats, lambda * stats.sigma_hat_max, lambda)
}

/// First AdaLDA stage,
/// `min ‖β‖₁ s.t. ‖Σ̂β − μ̂d‖∞ ≤ κ(λβᵀμ̂d + 1)` with `κ = 4σ̂max√(log p/n)`.
///
/// The bound is linear in β, so it moves into the constraint rows:
///
/// ```text
/// (Σ̂ − κλ·1μ̂dᵀ)β + u = μ̂d + κ·1
/// (Σ̂ + κλ·1μ̂dᵀ)β − v = μ̂d − κ·1
/// ```
pub fn assemble_adalda_stage1_program(stats: &SuffStats, lambda: f64) -> Result<ConicProgram> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let p = stats.p;
    let kappa = 4.0 * stats.sigma_hat_max * stats.rate();
    let coupling = kappa * lambda;
    let mut upper = stats.sigma_hat.clone();
    let mut lower = stats.sigma_hat.clone();
    for j in 0..p {
        let shift = coupling * stats.mu_hat_d[j];
        for i in 0..p {
            upper[(i, j)] -= shift;
            lower[(i, j)] += shift;
        }
    }
    let a_beta = stack3(&upper, &lower, &DMatrix::zeros(0, p));
    let m = 2 * p;
    let b = DVector::from_fn(m, |i, _| {
        if i < p {
            stats.mu_hat_d[i] + kappa
        } else {
            stats.mu_hat_d[i - p] - kappa
        }
    });
    ConicProgram {
        a_beta,
        a_u: placed_identity(m, p, 0, 1.0),
        a_v: placed_identity(m, p, p, -1.0),
        a_w: DMatrix::zeros(m, 0),
        a_tau: DVector::zeros(m),
        b,
        c_penalty: 0.0,
        lambda,
        has_soc_block: false,
    }
    .checked()
}
