use nalgebra::{DMatrix, DVector};
use panda::datagen::{build_model, sample, ModelKind, SimSpec};
use panda::estimators::{kclass_panda_fit, lpd_fit, panda_fit};
use panda::evaluation::{aggregate, auc_scores, variable_selection, MetricsRow};
use panda::linalg::eigen_range;
use panda::solver::{project_nonneg, project_soc, AdmmConfig};
use panda::{classify, compute_suff_stats, from_moments, population_risk, GaussianModel, LinearRule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(p: usize, rng: &mut ChaCha8Rng) -> GaussianModel {
    let a = DMatrix::from_fn(p + 2, p, |_, _| rng.random_range(-1.0..1.0));
    let sigma = a.transpose() * a / (p + 2) as f64 + DMatrix::identity(p, p) * 0.3;
    let mu0 = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let mu1 = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    GaussianModel::new(mu0, mu1, sigma).unwrap()
}

fn soc_strategy() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-10.0..10.0f64, 1..12), -10.0..10.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn soc_projection_membership_idempotence((x, t) in soc_strategy()) {
        let x = DVector::from_vec(x);
        let (px, pt) = project_soc(&x, t);
        prop_assert!(px.norm() <= pt + 1e-10);
        let (qx, qt) = project_soc(&px, pt);
        prop_assert!((&qx - &px).amax() <= 1e-10 && (qt - pt).abs() <= 1e-10);
    }

    #[test]
    fn soc_projection_nonexpansive((x, t) in soc_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = DVector::from_fn(x.len(), |_, _| rng.random_range(-10.0..10.0));
        let s: f64 = rng.random_range(-10.0..10.0);
        let x = DVector::from_vec(x);
        let (px, pt) = project_soc(&x, t);
        let (py, ps) = project_soc(&y, s);
        let before = ((&x - &y).norm_squared() + (t - s).powi(2)).sqrt();
        let after = ((&px - &py).norm_squared() + (pt - ps).powi(2)).sqrt();
        prop_assert!(after <= before + 1e-10);
    }

    #[test]
    fn orthant_projection_invariants(x in prop::collection::vec(-10.0..10.0f64, 1..12), y in prop::collection::vec(-10.0..10.0f64, 12)) {
        let x = DVector::from_vec(x);
        let y = DVector::from_fn(x.len(), |i, _| y[i]);
        let px = project_nonneg(&x);
        prop_assert!(px.iter().all(|v| *v >= 0.0));
        prop_assert_eq!(project_nonneg(&px), px.clone());
        prop_assert!((&px - project_nonneg(&y)).norm() <= (&x - &y).norm() + 1e-10);
    }

    #[test]
    fn risk_is_scale_invariant(seed in any::<u64>(), scale in 1e-3..1e3f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(4, &mut rng);
        let beta = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let alpha = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let r1 = population_risk(&LinearRule::new(alpha.clone(), beta.clone()), &model).unwrap();
        let r2 = population_risk(&LinearRule::new(alpha, beta * scale), &model).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-12);
    }

    #[test]
    fn classify_is_scale_invariant(seed in any::<u64>(), scale in 1e-3..1e3f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let alpha = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let a = LinearRule::new(alpha.clone(), beta.clone());
        let b = LinearRule::new(alpha, beta * scale);
        for _ in 0..50 {
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            prop_assert_eq!(classify(&a, &z).unwrap(), classify(&b, &z).unwrap());
        }
    }

    #[test]
    fn auc_invariant_under_increasing_map(s0 in prop::collection::vec(-5.0..5.0f64, 1..30), s1 in prop::collection::vec(-5.0..5.0f64, 1..30)) {
        let f = |v: &[f64]| v.iter().map(|x| 2.0 * x + 1.0).collect::<Vec<_>>();
        prop_assert_eq!(auc_scores(&s0, &s1).unwrap(), auc_scores(&f(&s0), &f(&s1)).unwrap());
    }

    #[test]
    fn selection_counts_partition(beta in prop::collection::vec(-1.0..1.0f64, 10), s in 1usize..10) {
        let beta_hat = DVector::from_vec(beta);
        let beta_star = DVector::from_fn(10, |i, _| if i < s { 1.0 } else { 0.0 });
        let sel = variable_selection(&beta_hat, &beta_star, 0.3).unwrap();
        prop_assert_eq!(sel.tp + sel.fn_, s);
        prop_assert_eq!(sel.tn + sel.fp, 10 - s);
        for r in [sel.precision, sel.recall] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn bayes_rule_dominates_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let model = random_model(5, &mut rng);
        let bayes = population_risk(&model.bayes_rule(), &model).unwrap();
        for _ in 0..100 {
            let eps = DVector::from_fn(5, |_, _| rng.random_range(-0.5..0.5));
            let rule = LinearRule::new(model.mu_m(), model.beta_star() + eps);
            assert!(bayes <= population_risk(&rule, &model).unwrap() + 1e-12);
        }
    }
}

#[test]
fn generated_covariances_are_spd() {
    for kind in ModelKind::ALL {
        for seed in 0..50 {
            let model = build_model(&SimSpec::new(kind, 30, 5, seed)).unwrap();
            let sigma = model.sigma();
            assert!((sigma - sigma.transpose()).amax() == 0.0, "{kind} seed {seed}");
            assert!(eigen_range(sigma).0 > 0.0, "{kind} seed {seed}");
        }
    }
}

#[test]
fn two_class_kpanda_matches_panda() {
    for seed in 0..3 {
        let model = build_model(&SimSpec::new(ModelKind::Ar1, 20, 3, seed)).unwrap();
        let (x0, x1) = sample(&model, 50, 50, seed + 100).unwrap();
        let stats = compute_suff_stats(&x0, &x1).unwrap();
        let cfg = AdmmConfig::default();
        let lambda = stats.rate();
        let binary = panda_fit(&stats, 20.0, lambda, &cfg).unwrap();
        let multi = kclass_panda_fit(&[x0, x1], &[20.0], lambda, &cfg, None).unwrap();
        assert!((&multi.betas[0] - &binary.beta_hat).amax() <= 1e-6);
    }
}

#[test]
fn fits_are_deterministic() {
    let model = build_model(&SimSpec::new(ModelKind::ErdosRenyi, 15, 3, 4)).unwrap();
    let (x0, x1) = sample(&model, 30, 30, 9).unwrap();
    let stats = compute_suff_stats(&x0, &x1).unwrap();
    let cfg = AdmmConfig::default();
    let a = panda_fit(&stats, 20.0, 0.2, &cfg).unwrap();
    let b = panda_fit(&stats, 20.0, 0.2, &cfg).unwrap();
    assert_eq!(a.beta_hat, b.beta_hat);
    assert_eq!(a.tau_hat, b.tau_hat);
}

#[test]
fn lpd_solution_translates_with_the_feasible_interval() {
    // p = 1: feasible set |4β − μ| ≤ 0.5 is [(μ−0.5)/4, (μ+0.5)/4]
    let cfg = AdmmConfig {
        primal_tol: 1e-9,
        change_tol: 1e-12,
        max_iters: 200_000,
        ..AdmmConfig::default()
    };
    let sigma = DMatrix::from_element(1, 1, 4.0);
    let fit_at = |mu: f64| {
        let stats = from_moments(DVector::zeros(1), DVector::from_element(1, mu), sigma.clone(), 50, 50).unwrap();
        // λ·σ̂max = 0.5 with σ̂max = 2
        lpd_fit(&stats, 0.25, &cfg).unwrap().beta_hat[0]
    };
    let base = fit_at(3.0);
    assert!((base - 0.625).abs() < 1e-6);
    for shift in [0.5, 1.0, 2.5] {
        assert!((fit_at(3.0 + 4.0 * shift) - (base + shift)).abs() < 1e-6);
    }
}

fn metrics_row(replicate: usize, method: &str, risk: f64) -> MetricsRow {
    MetricsRow {
        replicate,
        seed: replicate as u64,
        method: method.into(),
        model: "ar1".into(),
        p: 10,
        s: 2,
        n: 50,
        c: None,
        lambda_tilde: None,
        l1_err: risk * 3.0,
        l2_err: risk * 2.0,
        tau_rel_err: None,
        pop_risk: risk,
        test_err: risk + 0.01,
        tp: 2.0,
        tn: 8.0,
        precision: 1.0,
        recall: 1.0,
        auc: 0.9,
        nnz: 2,
        iterations: 10,
        status: "converged".into(),
        wall_time_s: 0.0,
    }
}

#[test]
fn aggregation_ignores_replicate_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows: Vec<MetricsRow> = (0..12)
        .map(|r| metrics_row(r / 2, if r % 2 == 0 { "panda" } else { "lpd" }, rng.random_range(0.1..0.4)))
        .collect();
    let forward = aggregate(&rows, &[]);
    rows.reverse();
    let mut backward = aggregate(&rows, &[]);
    backward.sort_by(|a, b| (a.method.as_str(), a.metric.as_str()).cmp(&(b.method.as_str(), b.metric.as_str())));
    let mut forward_sorted = forward.clone();
    forward_sorted.sort_by(|a, b| (a.method.as_str(), a.metric.as_str()).cmp(&(b.method.as_str(), b.metric.as_str())));
    assert_eq!(forward_sorted, backward);
}
