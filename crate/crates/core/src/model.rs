//! Population and sample-level objects for two-class Gaussian LDA.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::normal::std_normal_cdf;

/// Two Gaussian classes `N(μ0, Σ)` and `N(μ1, Σ)` with equal priors.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    mu0: DVector<f64>,
    mu1: DVector<f64>,
    sigma: DMatrix<f64>,
    beta_star: DVector<f64>,
    delta: f64,
}

impl GaussianModel {
    /// Validates `Σ` (symmetric, positive definite) and computes the Bayes
    /// direction by a linear solve.
    pub fn new(mu0: DVector<f64>, mu1: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        check_parts(&mu0, &mu1, &sigma)?;
        let (beta_star, delta) = solve_bayes(&sigma, &(&mu1 - &mu0))?;
        Ok(Self {
            mu0,
            mu1,
            sigma,
            beta_star,
            delta,
        })
    }

    /// Builds a model whose Bayes direction is known exactly (e.g. a simulation
    /// design with exact zeros). `Σβ* = μ1 − μ0` is verified.
    pub fn with_bayes_direction(
        mu0: DVector<f64>,
        mu1: DVector<f64>,
        sigma: DMatrix<f64>,
        beta_star: DVector<f64>,
    ) -> Result<Self> {
        check_parts(&mu0, &mu1, &sigma)?;
        if beta_star.len() != mu0.len() {
            return Err(Error::InvalidInput("beta_star length mismatch".into()));
        }
        let mu_d = &mu1 - &mu0;
        let residual = (&sigma * &beta_star - &mu_d).norm();
        if residual > 1e-8 * mu_d.norm().max(f64::MIN_POSITIVE) && residual > 1e-14 {
            return Err(Error::InvalidInput(format!(
                "beta_star does not solve Σβ = μd (residual {residual:.3e})"
            )));
        }
        let delta = beta_star.dot(&(&sigma * &beta_star)).max(0.0).sqrt();
        Ok(Self {
            mu0,
            mu1,
            sigma,
            beta_star,
            delta,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn mu1(&self) -> &DVector<f64> {
        &self.mu1
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    /// Signal-to-noise ratio `Δ = √(β*ᵀΣβ*)`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu_d(&self) -> DVector<f64> {
        &self.mu1 - &self.mu0
    }

    pub fn mu_m(&self) -> DVector<f64> {
        (&self.mu0 + &self.mu1) * 0.5
    }

    /// Bayes error `Φ(−Δ/2)`.
    pub fn bayes_risk(&self) -> f64 {
        std_normal_cdf(-0.5 * self.delta)
    }

    /// Fisher's rule `(μm, β*)`.
    pub fn bayes_rule(&self) -> LinearRule {
        LinearRule::new(self.mu_m(), self.beta_star.clone())
    }
}

fn check_parts(mu0: &DVector<f64>, mu1: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<()> {
    let p = mu0.len();
    if p == 0 || mu1.len() != p || sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::InvalidInput(format!(
            "inconsistent model dimensions: mu0 {}, mu1 {}, sigma {}x{}",
            p,
            mu1.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if mu0.iter().chain(mu1.iter()).chain(sigma.iter()).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("model has non-finite entries".into()));
    }
    let scale = sigma.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if linalg::asymmetry(sigma) > 1e-12 * scale {
        return Err(Error::InvalidInput("sigma is not symmetric".into()));
    }
    let (lo, _) = linalg::eigen_range(sigma);
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(())
}

fn solve_bayes(sigma: &DMatrix<f64>, mu_d: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let beta = linalg::spd_solve(sigma, mu_d)?;
    let delta = beta.dot(&(sigma * &beta)).max(0.0).sqrt();
    Ok((beta, delta))
}

/// `β* = Σ⁻¹(μ1 − μ0)` and `Δ = √(β*ᵀΣβ*)`, recomputed from the model's
/// population parameters by a Cholesky solve.
pub fn bayes_direction(model: &GaussianModel) -> Result<(DVector<f64>, f64)> {
    solve_bayes(&model.sigma, &model.mu_d())
}

/// Sample means and pooled covariance of a two-class training set.
#[derive(Debug, Clone)]
pub struct SuffStats {
    pub mu_hat0: DVector<f64>,
    pub mu_hat1: DVector<f64>,
    pub mu_hat_d: DVector<f64>,
    pub mu_hat_m: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub sigma_hat_sqrt: DMatrix<f64>,
    pub sigma_hat_max: f64,
    pub n0: usize,
    pub n1: usize,
    /// `min(n0, n1)`.
    pub n: usize,
    pub p: usize,
}

impl SuffStats {
    /// `√(log p / n)`, the rate that scales every tuning parameter.
    pub fn rate(&self) -> f64 {
        ((self.p as f64).ln() / self.n as f64).sqrt()
    }
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Centered cross-product `Σ (x_i − μ)(x_i − μ)ᵀ` of one class.
pub(crate) fn centered_scatter(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    centered.tr_mul(&centered)
}

/// Means of each class and the pooled covariance with divisor `n0 + n1`.
pub fn compute_suff_stats(samples0: &DMatrix<f64>, samples1: &DMatrix<f64>) -> Result<SuffStats> {
    let p = samples0.ncols();
    if samples1.ncols() != p || p == 0 {
        return Err(Error::InvalidInput(format!(
            "class samples have {} and {} columns",
            p,
            samples1.ncols()
        )));
    }
    for (label, x) in [("0", samples0), ("1", samples1)] {
        if x.nrows() < 2 {
            return Err(Error::InsufficientData {
                class: label.into(),
                needed: 2,
                got: x.nrows(),
            });
        }
    }
    let (n0, n1) = (samples0.nrows(), samples1.nrows());
    let mu_hat0 = column_means(samples0);
    let mu_hat1 = column_means(samples1);
    let mut sigma_hat =
        (centered_scatter(samples0, &mu_hat0) + centered_scatter(samples1, &mu_hat1)) / (n0 + n1) as f64;
    linalg::symmetrize(&mut sigma_hat);
    from_moments(mu_hat0, mu_hat1, sigma_hat, n0, n1)
}

/// Statistics from given class means and pooled covariance.
pub fn from_moments(
    mu_hat0: DVector<f64>,
    mu_hat1: DVector<f64>,
    sigma_hat: DMatrix<f64>,
    n0: usize,
    n1: usize,
) -> Result<SuffStats> {
    let p = mu_hat0.len();
    let sigma_hat_sqrt = linalg::sym_sqrt(&sigma_hat)?;
    let sigma_hat_max = sigma_hat
        .diagonal()
        .iter()
        .fold(0.0_f64, |a, &x| a.max(x))
        .sqrt();
    let mu_hat_d = &mu_hat1 - &mu_hat0;
    let mu_hat_m = (&mu_hat0 + &mu_hat1) * 0.5;
    Ok(SuffStats {
        mu_hat0,
        mu_hat1,
        mu_hat_d,
        mu_hat_m,
        sigma_hat,
        sigma_hat_sqrt,
        sigma_hat_max,
        n0,
        n1,
        n: n0.min(n1),
        p,
    })
}

/// The rule `z ↦ 1{βᵀ(z − α) > 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRule {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

impl LinearRule {
    pub fn new(alpha: DVector<f64>, beta: DVector<f64>) -> Self {
        Self { alpha, beta }
    }

    /// Discriminant score `βᵀ(z − α)`; `z` must have the rule's dimension.
    pub fn score(&self, z: &[f64]) -> f64 {
        self.beta
            .iter()
            .zip(self.alpha.iter())
            .zip(z)
            .map(|((b, a), x)| b * (x - a))
            .sum()
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }
}

/// Label 1 iff `βᵀ(z − α) > 0`; a zero score goes to class 0.
pub fn classify(rule: &LinearRule, z: &[f64]) -> Result<u8> {
    if z.len() != rule.dim() || rule.alpha.len() != rule.dim() {
        return Err(Error::InvalidInput(format!(
            "rule has dimension {}, point has {}",
            rule.dim(),
            z.len()
        )));
    }
    Ok(u8::from(rule.score(z) > 0.0))
}

/// Closed-form misclassification rate of a linear rule with equal priors.
pub fn population_risk(rule: &LinearRule, model: &GaussianModel) -> Result<f64> {
    if rule.dim() != model.dim() {
        return Err(Error::InvalidInput("rule and model dimensions differ".into()));
    }
    let quad = rule.beta.dot(&(model.sigma() * &rule.beta));
    if rule.beta.iter().all(|&b| b == 0.0) || quad <= 0.0 {
        return Err(Error::DegenerateRule);
    }
    let scale = quad.sqrt();
    let to_alpha = rule.beta.dot(&(&rule.alpha - model.mu0()));
    let from_alpha = rule.beta.dot(&(model.mu1() - &rule.alpha));
    Ok(0.5 * std_normal_cdf(-to_alpha / scale) + 0.5 * std_normal_cdf(-from_alpha / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(p: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
    }

    #[test]
    fn hand_computed_stats() {
        let x0 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 0.0]);
        let x1 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 3.0]);
        let s = compute_suff_stats(&x0, &x1).unwrap();
        assert_eq!(s.mu_hat0.as_slice(), &[1.0, 0.0]);
        assert_eq!(s.mu_hat1.as_slice(), &[1.0, 2.0]);
        assert_eq!(s.mu_hat_d.as_slice(), &[0.0, 2.0]);
        assert_eq!(s.mu_hat_m.as_slice(), &[1.0, 1.0]);
        assert!((s.sigma_hat - DMatrix::from_diagonal_element(2, 2, 0.5)).norm() < 1e-15);
        assert!((s.sigma_hat_max - 0.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.n, 2);
    }

    #[test]
    fn duplicated_rows_give_zero_covariance() {
        let x0 = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let x1 = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 0.0, 5.0]);
        let s = compute_suff_stats(&x0, &x1).unwrap();
        assert_eq!(s.sigma_hat.norm(), 0.0);
        assert_eq!(s.sigma_hat_max, 0.0);
        assert_eq!(s.sigma_hat_sqrt.norm(), 0.0);
    }

    /// Two-pass covariance written out with plain loops.
    fn two_pass_pooled(x0: &DMatrix<f64>, x1: &DMatrix<f64>) -> DMatrix<f64> {
        let p = x0.ncols();
        let mut out = DMatrix::zeros(p, p);
        for x in [x0, x1] {
            let mut mean = vec![0.0; p];
            for i in 0..x.nrows() {
                for j in 0..p {
                    mean[j] += x[(i, j)];
                }
            }
            mean.iter_mut().for_each(|m| *m /= x.nrows() as f64);
            for i in 0..x.nrows() {
                for j in 0..p {
                    for k in 0..p {
                        out[(j, k)] += (x[(i, j)] - mean[j]) * (x[(i, k)] - mean[k]);
                    }
                }
            }
        }
        out / (x0.nrows() + x1.nrows()) as f64
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..5 {
            let x0 = DMatrix::from_fn(20, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x1 = DMatrix::from_fn(20, 5, |_, _| 1.0 + rng.sample::<f64, _>(StandardNormal));
            let s = compute_suff_stats(&x0, &x1).unwrap();
            let oracle = two_pass_pooled(&x0, &x1);
            assert!((&s.sigma_hat - &oracle).norm() / oracle.norm() < 1e-12);
            let sq = &s.sigma_hat_sqrt * &s.sigma_hat_sqrt;
            assert!((sq - &s.sigma_hat).norm() / s.sigma_hat.norm() < 1e-8);
        }
    }

    #[test]
    fn stats_errors() {
        let x0 = DMatrix::<f64>::zeros(1, 3);
        let x1 = DMatrix::<f64>::zeros(4, 3);
        assert!(matches!(
            compute_suff_stats(&x0, &x1),
            Err(Error::InsufficientData { .. })
        ));
        let x2 = DMatrix::<f64>::zeros(4, 2);
        assert!(matches!(
            compute_suff_stats(&x1, &x2),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn bayes_direction_simple_cases() {
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let m = GaussianModel::new(DVector::zeros(3), e1.clone(), DMatrix::identity(3, 3)).unwrap();
        assert!((m.beta_star() - &e1).norm() < 1e-14);
        assert!((m.delta() - 1.0).abs() < 1e-14);

        let m = GaussianModel::new(DVector::zeros(3), e1.clone(), DMatrix::identity(3, 3) * 2.0).unwrap();
        assert!((m.beta_star() - &e1 * 0.5).norm() < 1e-14);
        assert!((m.delta() - 0.5_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bayes_direction_matches_dense_inverse() {
        let p = 10;
        let omega = ar1(p, 0.9);
        let sigma = omega.clone().try_inverse().unwrap();
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let mu1 = DVector::from_fn(p, |i, _| (i as f64 * 0.3).sin());
        let model = GaussianModel::new(DVector::zeros(p), mu1.clone(), sigma.clone()).unwrap();
        let (beta, delta) = bayes_direction(&model).unwrap();
        // Σ⁻¹ = Ω here
        let oracle = &omega * &mu1;
        assert!((&beta - &oracle).norm() < 1e-8 * oracle.norm());
        let delta_oracle = mu1.dot(&(&omega * &mu1)).sqrt();
        assert!((delta - delta_oracle).abs() < 1e-8 * delta_oracle);
        assert!((&sigma * &beta - &mu1).norm() <= 1e-8 * mu1.norm());
    }

    #[test]
    fn rejects_bad_sigma() {
        let mut s = DMatrix::<f64>::identity(2, 2);
        s[(0, 1)] = 0.3;
        assert!(GaussianModel::new(DVector::zeros(2), DVector::zeros(2), s).is_err());
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianModel::new(DVector::zeros(2), DVector::zeros(2), s),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn classify_boundary_and_scale() {
        let rule = LinearRule::new(DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(classify(&rule, &[1.0, 5.0]).unwrap(), 1);
        assert_eq!(classify(&rule, &[0.0, 5.0]).unwrap(), 0);
        assert_eq!(classify(&rule, &[-0.5, 5.0]).unwrap(), 0);
        assert!(classify(&rule, &[1.0]).is_err());
        let scaled = LinearRule::new(rule.alpha.clone(), &rule.beta * 7.5);
        for z in [[0.3, -1.0], [-2.0, 0.0], [1e-9, 3.0]] {
            assert_eq!(classify(&rule, &z).unwrap(), classify(&scaled, &z).unwrap());
        }
    }

    #[test]
    fn risk_of_bayes_rule() {
        let mu0 = DVector::from_vec(vec![-0.5, 0.0]);
        let mu1 = DVector::from_vec(vec![0.5, 0.0]);
        let m = GaussianModel::new(mu0, mu1, DMatrix::identity(2, 2)).unwrap();
        let rule = LinearRule::new(DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0]));
        let r = population_risk(&rule, &m).unwrap();
        assert!((r - 0.308_537_538_725_986_9).abs() < 1e-10);
        assert!((population_risk(&m.bayes_rule(), &m).unwrap() - m.bayes_risk()).abs() < 1e-15);
        let zero = LinearRule::new(DVector::zeros(2), DVector::zeros(2));
        assert!(matches!(population_risk(&zero, &m), Err(Error::DegenerateRule)));
    }
}
