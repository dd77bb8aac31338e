//! Proximal ADMM on the scaled-dual augmented Lagrangian
//!
//! ```text
//! L_ρ = ‖β‖₁ + cτ² + ρ/2‖A_β β + A_u u + A_v v + A_w w + A_τ τ − b + s‖² − ρ/2‖s‖²
//! ```
//!
//! Each sweep updates the blocks in the order β, u, v, (w, τ), then the scaled
//! dual `s`. β takes a proximal gradient step. The slack blocks take projected
//! gradient steps, which are exact block minimizations when their columns are
//! orthonormal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cones::{project_soc_in_place, soft_threshold};
use super::program::ConicProgram;
use crate::error::{Error, Result};
use crate::linalg::gram_spectral_norm;

const POWER_ITERS: usize = 30;
const RESIDUAL_REFRESH: usize = 200;


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    /// Penalty parameter ρ.
    pub rho: f64,
    /// Step size of the β block; `None` picks `0.9/(ρ·λmax(A_βᵀA_β))`.
    pub eta: Option<f64>,
    pub max_iters: usize,
    /// Bound on `‖Ax − b‖₂ / (1 + ‖b‖₂)`.
    pub primal_tol: f64,
    /// Bound on `‖x_t − x_{t−1}‖₂ / (1 + ‖x_t‖₂)`.
    pub change_tol: f64,
    /// Record a trace row every this many iterations (0 disables tracing).
    pub trace_every: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eta: None,
            max_iters: 20_000,
            primal_tol: 1e-6,
            change_tol: 1e-8,
            trace_every: 0,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.rho) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {}", self.rho)));
        }
        if let Some(eta) = self.eta {
            if !positive(eta) {
                return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
            }
        }
        if !positive(self.primal_tol) || !positive(self.change_tol) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Primal iterate and scaled dual.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub beta: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    pub tau: f64,
    pub s: DVector<f64>,
}

impl AdmmState {
    pub fn zeros(program: &ConicProgram) -> Self {
        Self {
            beta: DVector::zeros(program.dim()),
            u: DVector::zeros(program.a_u.ncols()),
            v: DVector::zeros(program.a_v.ncols()),
            w: DVector::zeros(program.a_w.ncols()),
            tau: 0.0,
            s: DVector::zeros(program.rows()),
        }
    }

    fn fits(&self, program: &ConicProgram) -> bool {
        self.beta.len() == program.dim()
            && self.u.len() == program.a_u.ncols()
            && self.v.len() == program.a_v.ncols()
            && self.w.len() == program.a_w.ncols()
            && self.s.len() == program.rows()
    }

    fn is_finite(&self) -> bool {
        self.tau.is_finite()
            && [&self.beta, &self.u, &self.v, &self.w, &self.s]
                .iter()
                .all(|x| x.iter().all(|v| v.is_finite()))
    }

    fn primal_norm_squared(&self) -> f64 {
        self.beta.norm_squared()
            + self.u.norm_squared()
            + self.v.norm_squared()
            + self.w.norm_squared()
            + self.tau * self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::Diverged => "diverged",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_residual: f64,
    pub best_residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub beta_hat: DVector<f64>,
    pub tau_hat: f64,
    pub objective: f64,
    pub primal_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Last finite iterate; reusable as a warm start.
    pub state: AdmmState,
    pub trace: Vec<TraceRow>,
}

/// Per-block step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub beta: f64,
    pub u: f64,
    pub v: f64,
    pub w_tau: f64,
}

/// Power-iteration estimates of `λmax` of each block's Gram matrix.
#[derive(Debug, Clone, Copy)]
struct Lipschitz {
    beta: f64,
    u: f64,
    v: f64,
    w_tau: f64,
}

impl Lipschitz {
    fn of(program: &ConicProgram) -> Self {
        let w_tau = if program.has_soc_block {
            let p = program.a_w.ncols();
            let mut joint = DMatrix::zeros(program.rows(), p + 1);
            joint.columns_mut(0, p).copy_from(&program.a_w);
            joint.column_mut(p).copy_from(&program.a_tau);
            gram_spectral_norm(&joint, POWER_ITERS)
        } else {
            0.0
        };
        Self {
            beta: gram_spectral_norm(&program.a_beta, POWER_ITERS),
            u: gram_spectral_norm(&program.a_u, POWER_ITERS),
            v: gram_spectral_norm(&program.a_v, POWER_ITERS),
            w_tau,
        }
    }
}

impl StepSizes {
    /// The β block uses `config.eta` (or `0.9/(ρL_β)`); the slack blocks use
    /// `1/(ρL)`, which is exact minimization for identity blocks; the joint
    /// `(w, τ)` block uses `0.9/(ρL + 2c)`. `L` is the power-iteration estimate
    /// of `λmax` of each block's Gram matrix.
    pub fn for_program(program: &ConicProgram, config: &AdmmConfig) -> Self {
        Self::scaled(&Lipschitz::of(program), config.rho, config.eta, program)
    }

    fn scaled(l: &Lipschitz, rho: f64, eta: Option<f64>, program: &ConicProgram) -> Self {
        let inv = |l: f64, factor: f64| if l > 0.0 { factor / (rho * l) } else { 1.0 / rho };
        let w_tau = if program.has_soc_block {
            let joint = rho * l.w_tau + 2.0 * program.c_penalty;
            if joint > 0.0 {
                0.9 / joint
            } else {
                1.0 / rho
            }
        } else {
            0.0
        };
        Self {
            beta: eta.unwrap_or_else(|| inv(l.beta, 0.9)),
            u: inv(l.u, 1.0),
            v: inv(l.v, 1.0),
            w_tau,
        }
    }
}

/// A constraint block stored densely or column-compressed, whichever is
/// cheaper for its fill.
enum Block {
    Dense(DMatrix<f64>),
    Sparse { rows: usize, cols: Vec<Vec<(usize, f64)>> },
}

impl Block {
    fn new(a: &DMatrix<f64>) -> Self {
        let nnz = a.iter().filter(|x| **x != 0.0).count();
        if (nnz as f64) <= 0.2 * (a.nrows() * a.ncols()) as f64 {
            let cols = a
                .column_iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(i, v)| (i, *v))
                        .collect()
                })
                .collect();
            Block::Sparse {
                rows: a.nrows(),
                cols,
            }
        } else {
            Block::Dense(a.clone())
        }
    }

    /// `out += A·delta`, skipping zero entries of `delta`.
    fn add_apply(&self, delta: &[f64], out: &mut DVector<f64>) {
        match self {
            Block::Dense(a) => {
                for (j, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        out.axpy(d, &a.column(j), 1.0);
                    }
                }
            }
            Block::Sparse { cols, .. } => {
                for (j, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for &(i, v) in &cols[j] {
                            out[i] += v * d;
                        }
                    }
                }
            }
        }
    }

    /// `out = Aᵀ·z`.
    fn apply_tr(&self, z: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            Block::Dense(a) => out.gemv_tr(1.0, a, z, 0.0),
            Block::Sparse { cols, .. } => {
                for (o, col) in out.iter_mut().zip(cols) {
                    *o = col.iter().map(|&(i, v)| v * z[i]).sum();
                }
            }
        }
    }

    #[allow(dead_code)]
    fn rows(&self) -> usize {
        match self {
            Block::Dense(a) => a.nrows(),
            Block::Sparse { rows, .. } => *rows,
        }
    }
}

struct Kernel<'a> {
    program: &'a ConicProgram,
    a_beta: Block,
    a_u: Block,
    a_v: Block,
    a_w: Block,
    steps: StepSizes,
    /// `‖A_τ‖²` when `A_wᵀA_w = I` and `A_wᵀA_τ = 0`, enabling the exact
    /// `(w, τ)` minimization.
    soc_exact: Option<f64>,
    rho: f64,
    // scratch
    z: DVector<f64>,
    grad: DVector<f64>,
    delta: Vec<f64>,
}

impl<'a> Kernel<'a> {
    fn new(program: &'a ConicProgram, config: &AdmmConfig) -> Self {
        let p = program.dim();
        let width = p
            .max(program.a_u.ncols())
            .max(program.a_v.ncols())
            .max(program.a_w.ncols());
        let lipschitz = Lipschitz::of(program);
        Self {
            program,
            a_beta: Block::new(&program.a_beta),
            a_u: Block::new(&program.a_u),
            a_v: Block::new(&program.a_v),
            a_w: Block::new(&program.a_w),
            steps: StepSizes::scaled(&lipschitz, config.rho, config.eta, program),
            soc_exact: orthogonal_soc_columns(program),
            rho: config.rho,
            z: DVector::zeros(program.rows()),
            grad: DVector::zeros(width),
            delta: vec![0.0; width],
        }
    }

    fn residual(&self, st: &AdmmState) -> DVector<f64> {
        self.program.residual(&st.beta, &st.u, &st.v, &st.w, st.tau)
    }

    /// One sweep. `r` holds `Ax − b` for `st` on entry and on exit.
    /// Returns `‖x_t − x_{t−1}‖²`.
    fn sweep(&mut self, st: &mut AdmmState, r: &mut DVector<f64>) -> f64 {
        let rho = self.rho;
        let mut change = 0.0;

        // β: proximal gradient step
        let p = st.beta.len();
        self.z.copy_from(r);
        self.z += &st.s;
        let mut g = self.grad.rows_mut(0, p).into_owned();
        self.a_beta.apply_tr(&self.z, &mut g);
        let eta = self.steps.beta;
        for j in 0..p {
            let next = soft_threshold(st.beta[j] - eta * rho * g[j], eta);
            self.delta[j] = next - st.beta[j];
            change += self.delta[j] * self.delta[j];
            st.beta[j] = next;
        }
        self.a_beta.add_apply(&self.delta[..p], r);

        // u and v: projected gradient steps onto the nonnegative orthant
        change += Self::orthant_step(&self.a_u, &mut st.u, &st.s, r, &mut self.z, rho, self.steps.u, &mut self.delta);
        change += Self::orthant_step(&self.a_v, &mut st.v, &st.s, r, &mut self.z, rho, self.steps.v, &mut self.delta);

        // (w, τ): exact block minimization when the columns allow it, otherwise
        // a joint gradient step; both end in a second-order cone projection
        if self.program.has_soc_block {
            let q = st.w.len();
            self.z.copy_from(r);
            self.z += &st.s;
            let mut gw = DVector::zeros(q);
            self.a_w.apply_tr(&self.z, &mut gw);
            let a_tau_z = self.program.a_tau.dot(&self.z);
            let c = self.program.c_penalty;
            let (w_next, tau_next) = match self.soc_exact {
                Some(k) => {
                    let w_target: Vec<f64> = st.w.iter().zip(gw.iter()).map(|(w, g)| w - g).collect();
                    let weight = rho * k + 2.0 * c;
                    let tau_target = if k > 0.0 {
                        rho * (k * st.tau - a_tau_z) / weight
                    } else {
                        0.0
                    };
                    weighted_soc_projection(w_target, tau_target, rho, weight)
                }
                None => {
                    let eta = self.steps.w_tau;
                    let mut w_next: Vec<f64> = st.w.iter().zip(gw.iter()).map(|(w, g)| w - eta * rho * g).collect();
                    let mut tau_next = st.tau - eta * (rho * a_tau_z + 2.0 * c * st.tau);
                    project_soc_in_place(&mut w_next, &mut tau_next);
                    (w_next, tau_next)
                }
            };
            for j in 0..q {
                self.delta[j] = w_next[j] - st.w[j];
                change += self.delta[j] * self.delta[j];
                st.w[j] = w_next[j];
            }
            self.a_w.add_apply(&self.delta[..q], r);
            let d_tau = tau_next - st.tau;
            if d_tau != 0.0 {
                r.axpy(d_tau, &self.program.a_tau, 1.0);
            }
            change += d_tau * d_tau;
            st.tau = tau_next;
        }

        // scaled dual ascent
        st.s += &*r;
        change
    }

    #[allow(clippy::too_many_arguments)]
    fn orthant_step(
        block: &Block,
        x: &mut DVector<f64>,
        s: &DVector<f64>,
        r: &mut DVector<f64>,
        z: &mut DVector<f64>,
        rho: f64,
        eta: f64,
        delta: &mut [f64],
    ) -> f64 {
        let q = x.len();
        if q == 0 {
            return 0.0;
        }
        z.copy_from(r);
        *z += s;
        let mut g = DVector::zeros(q);
        block.apply_tr(z, &mut g);
        let mut change = 0.0;
        for j in 0..q {
            let next = (x[j] - eta * rho * g[j]).max(0.0);
            delta[j] = next - x[j];
            change += delta[j] * delta[j];
            x[j] = next;
        }
        block.add_apply(&delta[..q], r);
        change
    }
}

/// `‖A_τ‖²` if the `w` columns are orthonormal and orthogonal to `A_τ`.
fn orthogonal_soc_columns(program: &ConicProgram) -> Option<f64> {
    if !program.has_soc_block || program.a_w.ncols() == 0 {
        return None;
    }
    let tol = 1e-12;
    let gram = program.a_w.tr_mul(&program.a_w);
    let identity = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
    let cross = program.a_w.tr_mul(&program.a_tau);
    ((gram - identity).amax() <= tol && cross.amax() <= tol).then(|| program.a_tau.norm_squared())
}

/// `argmin ρ/2‖w − q‖² + α/2(τ − t)²` over `‖w‖ ≤ τ`.
fn weighted_soc_projection(mut q: Vec<f64>, t: f64, rho: f64, alpha: f64) -> (Vec<f64>, f64) {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t {
        return (q, t);
    }
    let tau = (rho * norm + alpha * t) / (rho + alpha);
    if tau <= 0.0 {
        q.iter_mut().for_each(|v| *v = 0.0);
        return (q, 0.0);
    }
    let ratio = tau / norm;
    q.iter_mut().for_each(|v| *v *= ratio);
    (q, tau)
}

/// One ADMM sweep from `state`.
pub fn admm_step(state: &AdmmState, program: &ConicProgram, config: &AdmmConfig) -> Result<AdmmState> {
    config.validate()?;
    if !state.fits(program) {
        return Err(Error::InvalidInput("state dimensions do not match the program".into()));
    }
    let mut kernel = Kernel::new(program, config);
    let mut next = state.clone();
    let mut r = kernel.residual(&next);
    kernel.sweep(&mut next, &mut r);
    Ok(next)
}

struct Snapshot {
    beta: DVector<f64>,
    tau: f64,
    residual: f64,
}

impl Snapshot {
    fn take(&mut self, state: &AdmmState, residual: f64) {
        self.beta.copy_from(&state.beta);
        self.tau = state.tau;
        self.residual = residual;
    }
}

/// Iterate until the relative primal residual and the relative iterate change
/// both fall below their tolerances, or `max_iters` sweeps have run.
///
/// A converged run reports its final iterate. Otherwise the most recent
/// iterate within `primal_tol` is reported, or failing that the iterate with
/// the smallest primal residual seen.
pub fn solve(program: &ConicProgram, config: &AdmmConfig, init: Option<&AdmmState>) -> Result<Solution> {
    config.validate()?;
    let mut state = match init {
        Some(s) if s.fits(program) => s.clone(),
        Some(_) => return Err(Error::InvalidInput("initial state does not match the program".into())),
        None => AdmmState::zeros(program),
    };
    let mut kernel = Kernel::new(program, config);
    let b_scale = 1.0 + program.b.norm();
    let mut r = kernel.residual(&state);
    let mut best = Snapshot {
        beta: state.beta.clone(),
        tau: state.tau,
        residual: r.norm() / b_scale,
    };
    let mut feasible: Option<Snapshot> = None;
    let mut trace = Vec::new();
    let mut last_finite = state.clone();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut residual = best.residual;

    for it in 1..=config.max_iters {
        iterations = it;
        let change = kernel.sweep(&mut state, &mut r);
        if it % RESIDUAL_REFRESH == 0 {
            r = kernel.residual(&state);
        }
        residual = r.norm() / b_scale;
        if !residual.is_finite() || !change.is_finite() || !state.is_finite() {
            status = SolveStatus::Diverged;
            state = last_finite.clone();
            break;
        }
        if residual < best.residual {
            best.take(&state, residual);
        }
        if residual <= config.primal_tol {
            match feasible.as_mut() {
                Some(snap) => snap.take(&state, residual),
                None => {
                    feasible = Some(Snapshot {
                        beta: state.beta.clone(),
                        tau: state.tau,
                        residual,
                    })
                }
            }
        }
        if config.trace_every > 0 && it % config.trace_every == 0 {
            trace.push(TraceRow {
                iteration: it,
                primal_residual: residual,
                best_residual: best.residual,
                objective: program.objective(&state.beta, state.tau),
            });
        }
        let relative_change = change.sqrt() / (1.0 + state.primal_norm_squared().sqrt());
        if residual <= config.primal_tol && relative_change <= config.change_tol {
            status = SolveStatus::Converged;
            break;
        }
        last_finite.clone_from(&state);
    }

    let (beta_hat, tau_hat, primal_residual) = if status == SolveStatus::Converged {
        (state.beta.clone(), state.tau, residual)
    } else {
        let pick = feasible.unwrap_or(best);
        (pick.beta, pick.tau, pick.residual)
    };
    if status == SolveStatus::Diverged {
        log::warn!("ADMM diverged after {iterations} iterations");
    }
    Ok(Solution {
        objective: program.objective(&beta_hat, tau_hat),
        beta_hat,
        tau_hat,
        primal_residual,
        iterations,
        status,
        state,
        trace,
    })
}
