//! Euclidean projections onto the nonnegative orthant and the second-order
//! cone, and the soft-thresholding operator.

use nalgebra::DVector;

/// Projection onto `{x : x ≥ 0}`.
pub fn project_nonneg(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.max(0.0))
}

/// Projection of `(x, t)` onto `{(x, t) : ‖x‖₂ ≤ t}`.
pub fn project_soc(x: &DVector<f64>, t: f64) -> (DVector<f64>, f64) {
    let norm = x.norm();
    if norm <= t {
        (x.clone(), t)
    } else if norm <= -t {
        (DVector::zeros(x.len()), 0.0)
    } else {
        let scale = 0.5 * (norm + t);
        (x * (scale / norm), scale)
    }
}

/// In-place variant used by the solver's inner loop.
pub(crate) fn project_soc_in_place(x: &mut [f64], t: &mut f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= *t {
        return;
    }
    if norm <= -*t {
        x.iter_mut().for_each(|v| *v = 0.0);
        *t = 0.0;
        return;
    }
    let scale = 0.5 * (norm + *t);
    let ratio = scale / norm;
    x.iter_mut().for_each(|v| *v *= ratio);
    *t = scale;
}

#[inline]
pub(crate) fn soft_threshold(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

/// Proximal map of `threshold·‖·‖₁`: componentwise soft-thresholding.
pub fn prox_l1(x: &DVector<f64>, threshold: f64) -> DVector<f64> {
    x.map(|v| soft_threshold(v, threshold))
}
