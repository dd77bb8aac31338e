//! Simulation designs for `(Σ, β*)` and seeded Gaussian sampling.
//!
//! Every design places the class means symmetrically, `μ0 = −Σβ*/2` and
//! `μ1 = Σβ*/2`, so that `Σ⁻¹μd = β*` exactly and `μm = 0`.
//!
//! Random draws use ChaCha8 (`rand_chacha`), seeded from a 64-bit value.
//! Independent streams for one replicate are derived with [`stream_seed`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::GaussianModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Precision `Ω_jk = 0.9^|j−k|`, `β*_j = 2/√s` on the first `s` coordinates.
    Ar1,
    /// `Σ_jj = 11` for `j ≤ 5`, `1 + U(0,1)` otherwise, `Σ_jk = 0.9^|j−k|`.
    VaryingDiagonal,
    /// Sparse random precision from an Erdős–Rényi graph.
    ErdosRenyi,
    /// Precision with a Bernoulli upper block and a constant lower block.
    BlockSparse,
    /// `Σ_jk = 0.9^|j−k|`, `β*_j = 0.75^j`.
    ApproxSparse,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Ar1,
        ModelKind::VaryingDiagonal,
        ModelKind::ErdosRenyi,
        ModelKind::BlockSparse,
        ModelKind::ApproxSparse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ar1 => "ar1",
            ModelKind::VaryingDiagonal => "varying_diagonal",
            ModelKind::ErdosRenyi => "erdos_renyi",
            ModelKind::BlockSparse => "block_sparse",
            ModelKind::ApproxSparse => "approx_sparse",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model '{s}'")))
    }
}

fn default_eta_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: ModelKind,
    pub p: usize,
    /// Sparsity; unused by [`ModelKind::ApproxSparse`].
    pub s: usize,
    /// Multiplier on `β*`.
    #[serde(default = "default_eta_scale")]
    pub eta_scale: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(model: ModelKind, p: usize, s: usize, seed: u64) -> Self {
        Self {
            model,
            p,
            s,
            eta_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidInput(format!("p must be at least 2, got {}", self.p)));
        }
        if self.model != ModelKind::ApproxSparse && (self.s == 0 || self.s > self.p) {
            return Err(Error::InvalidInput(format!(
                "sparsity s = {} must lie in 1..={}",
                self.s, self.p
            )));
        }
        if !(self.eta_scale > 0.0) || !self.eta_scale.is_finite() {
            return Err(Error::InvalidInput("eta_scale must be positive".into()));
        }
        Ok(())
    }

    /// True nonzero count of `β*`.
    pub fn support_size(&self) -> usize {
        match self.model {
            ModelKind::ApproxSparse => self.p,
            _ => self.s,
        }
    }
}

/// SplitMix64 finalizer of `seed ⊕ stream`; gives well-separated seeds for
/// the independent draws of one replicate.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn toeplitz(p: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| r.powi(i.abs_diff(j) as i32))
}

fn leading(p: usize, s: usize, value: f64) -> DVector<f64> {
    DVector::from_fn(p, |i, _| if i < s { value } else { 0.0 })
}

fn ensure_spd(m: &DMatrix<f64>) -> Result<()> {
    let (lo, _) = linalg::eigen_range(m);
    if lo <= 1e-10 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(())
}

fn erdos_renyi_precision(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(p, p, |_, _| {
        let edge = rng.random_bool(0.2);
        let magnitude = rng.random_range(0.5..=1.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        if edge {
            sign * magnitude
        } else {
            0.0
        }
    });
    let mut sym = (&raw + raw.transpose()) * 0.5;
    linalg::symmetrize(&mut sym);
    let (lo, _) = linalg::eigen_range(&sym);
    let shift = (-lo).max(0.0) + 0.05;
    for j in 0..p {
        sym[(j, j)] += shift;
    }
    let d = DVector::from_fn(p, |j, _| 1.0 / sym[(j, j)].sqrt());
    DMatrix::from_fn(p, p, |i, j| d[i] * sym[(i, j)] * d[j])
}

fn block_sparse_precision(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let half = p / 2;
    let mut b = DMatrix::identity(p, p);
    for j in 0..p {
        for k in (j + 1)..p {
            let value = if j < half {
                if rng.random_bool(0.5) {
                    10.0
                } else {
                    0.0
                }
            } else {
                10.0
            };
            b[(j, k)] = value;
            b[(k, j)] = value;
        }
    }
    let (lo, _) = linalg::eigen_range(&b);
    let w = (-lo).max(0.0) + 0.05;
    for j in 0..p {
        b[(j, j)] += w;
    }
    b / (1.0 + w)
}

/// Population model `(μ0, μ1, Σ)` and its exact Bayes direction for `spec`.
pub fn build_model(spec: &SimSpec) -> Result<GaussianModel> {
    spec.validate()?;
    let (p, s) = (spec.p, spec.s);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sqrt_s = (s as f64).sqrt();
    let (sigma, beta) = match spec.model {
        ModelKind::Ar1 => (linalg::spd_inverse(&toeplitz(p, 0.9))?, leading(p, s, 2.0 / sqrt_s)),
        ModelKind::VaryingDiagonal => {
            let mut sigma = toeplitz(p, 0.9);
            for j in 0..p {
                sigma[(j, j)] = if j < 5 { 11.0 } else { 1.0 + rng.random_range(0.0..1.0) };
            }
            (sigma, leading(p, s, 1.0 / sqrt_s))
        }
        ModelKind::ErdosRenyi => {
            let omega = erdos_renyi_precision(p, &mut rng);
            (linalg::spd_inverse(&omega)?, leading(p, s, 1.0 / sqrt_s))
        }
        ModelKind::BlockSparse => {
            let omega = block_sparse_precision(p, &mut rng);
            (linalg::spd_inverse(&omega)?, leading(p, s, 0.5 / sqrt_s))
        }
        ModelKind::ApproxSparse => (
            toeplitz(p, 0.9),
            DVector::from_fn(p, |j, _| 0.75_f64.powi(j as i32 + 1)),
        ),
    };
    ensure_spd(&sigma)?;
    let beta = beta * spec.eta_scale;
    let half_shift = (&sigma * &beta) * 0.5;
    GaussianModel::with_bayes_direction(-&half_shift, half_shift, sigma, beta)
}

/// Draw `n0` rows from `N(μ0, Σ)` and `n1` rows from `N(μ1, Σ)`.
pub fn sample(model: &GaussianModel, n0: usize, n1: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidInput("sample sizes must be at least 1".into()));
    }
    let chol = model.sigma().clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: linalg::eigen_range(model.sigma()).0,
    })?;
    let lt = chol.l().transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize, mean: &DVector<f64>| {
        let p = mean.len();
        let z = DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let mut x = z * &lt;
        for mut row in x.row_iter_mut() {
            row += mean.transpose();
        }
        x
    };
    let x0 = draw(n0, model.mu0());
    let x1 = draw(n1, model.mu1());
    Ok((x0, x1))
}
