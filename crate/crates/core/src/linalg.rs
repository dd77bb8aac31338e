//! Dense symmetric linear algebra helpers built on `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Replace `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Symmetric positive semidefinite square root via eigendecomposition.
///
/// Negative eigenvalues (round-off, or a genuinely indefinite input) are
/// clamped to zero before taking the root.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "square root needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = 1e-10 * max_abs(m).max(1.0);
    let asym = asymmetry(m);
    if asym > tol {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    let mut root = scaled * eig.eigenvectors.transpose();
    symmetrize(&mut root);
    Ok(root)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Solve `m x = rhs` for symmetric positive definite `m` by Cholesky.
///
/// The condition number is estimated from the extreme eigenvalues; above
/// `1e12` the system is rejected as numerically singular.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let (lo, hi) = eigen_range(m);
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    let condition = hi / lo;
    if condition > 1e12 {
        return Err(Error::IllConditioned { condition });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: lo })?;
    Ok(chol.solve(rhs))
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        let (lo, _) = eigen_range(m);
        Error::NotPositiveDefinite { min_eigenvalue: lo }
    })?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Estimate `λmax(AᵀA)` with `iters` power-iteration steps.
pub fn gram_spectral_norm(a: &DMatrix<f64>, iters: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // deterministic start with mild variation so it is unlikely to be
    // orthogonal to the leading eigenvector
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919 % 97) as f64 / 97.0));
    x /= x.norm();
    let mut estimate = 0.0;
    for _ in 0..iters {
        let ax = a * &x;
        let y = a.tr_mul(&ax);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = ax.norm_squared();
        x = y / norm;
    }
    let ax = a * &x;
    estimate.max(ax.norm_squared())
}
