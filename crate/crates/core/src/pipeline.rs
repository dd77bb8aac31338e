//! Real-data workflow: variance filter, stratified split, t-test screening
//! on the training split, validation tuning, fit and test error.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, stratified_split, t_test_select, variance_quantile_filter, RealDataset, SplitCounts, SplitManifest};
use crate::error::{Error, Result};
use crate::estimators::{theoretical_defaults, Method};
use crate::evaluation::empirical_error;
use crate::experiment::ParameterMode;
use crate::model::compute_suff_stats;
use crate::solver::AdmmConfig;
use crate::tuning::{fit_method, grid_search, CurvePoint, TuneGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: PathBuf,
    pub label_column: String,
    pub delimiter: char,
    /// Trim fraction of the variance filter (0 disables it).
    pub variance_fraction: f64,
    pub split: SplitCounts,
    /// Features kept by t-test screening (capped at the filtered `p`).
    pub top_m: usize,
    pub methods: Vec<Method>,
    pub mode: ParameterMode,
    pub c: f64,
    /// `λ̃` in fixed mode.
    pub lambda_tilde: f64,
    /// Practical-mode grid; `c` is taken from `c`.
    pub grid: TuneGrid,
    pub admm: AdmmConfig,
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            label_column: "label".into(),
            delimiter: ',',
            variance_fraction: 1.0 / 6.0,
            split: SplitCounts::LEUKEMIA,
            top_m: 2000,
            methods: vec![Method::Panda],
            mode: ParameterMode::Practical,
            c: 20.0,
            lambda_tilde: 1.0,
            grid: TuneGrid::default(),
            admm: AdmmConfig::default(),
            warm_start: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub c: Option<f64>,
    pub lambda_tilde: f64,
    pub val_error: Option<f64>,
    pub test_error: f64,
    pub nnz: usize,
    pub tau_hat: Option<f64>,
    /// `(feature name, β̂ⱼ)` over the screened features.
    pub beta: Vec<(String, f64)>,
    /// Validation curve in practical mode.
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    /// Stage descriptions in execution order.
    pub stages: Vec<String>,
    pub features_after_filter: usize,
    pub selected_features: Vec<String>,
    pub split: SplitManifest,
    pub methods: Vec<MethodReport>,
}

fn stage(stages: &mut Vec<String>, text: String) {
    log::info!("{text}");
    stages.push(text);
}

/// Loads `cfg.data` and runs [`run_pipeline_on`].
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    if !cfg.delimiter.is_ascii() {
        return Err(Error::InvalidParameter("delimiter must be a single ASCII character".into()));
    }
    let data = load_csv(&cfg.data, &cfg.label_column, cfg.delimiter as u8)?;
    run_pipeline_on(&data, cfg)
}

pub fn run_pipeline_on(data: &RealDataset, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let mut stages = Vec::new();
    stage(
        &mut stages,
        format!("load: {} rows, {} features", data.n(), data.p()),
    );

    let (filtered, _) = variance_quantile_filter(data, cfg.variance_fraction)?;
    stage(
        &mut stages,
        format!("filter: kept {} of {} features", filtered.p(), data.p()),
    );

    let (train, val, test, manifest) = stratified_split(&filtered, cfg.split, cfg.seed)?;
    stage(
        &mut stages,
        format!(
            "split: train {}/{}, val {}/{}, test {}/{}",
            train.class_count(0),
            train.class_count(1),
            val.class_count(0),
            val.class_count(1),
            test.class_count(0),
            test.class_count(1)
        ),
    );

    let m = cfg.top_m.min(train.p());
    let selected = t_test_select(&train, m)?;
    let (train, val, test) = (
        train.select_features(&selected),
        val.select_features(&selected),
        test.select_features(&selected),
    );
    stage(&mut stages, format!("select: top {m} features by |t| on the training split"));

    let (x0, x1) = train.class_matrices();
    let stats = compute_suff_stats(&x0, &x1)?;
    let (v0, v1) = val.class_matrices();
    let (t0, t1) = test.class_matrices();
    let names = train.names();
    let mut reports = Vec::new();
    for &method in &cfg.methods {
        if !method.is_tunable() {
            return Err(Error::InvalidParameter(format!("{method} cannot be fit to data")));
        }
        let val_error_of = |rule| -> Result<Option<f64>> {
            if v0.nrows() + v1.nrows() > 0 {
                Ok(Some(empirical_error(rule, &v0, &v1)?))
            } else {
                Ok(None)
            }
        };
        let is_panda = matches!(method, Method::Panda | Method::KPanda);
        let (fit, c, lambda_tilde, val_error, curve) = match cfg.mode {
            ParameterMode::Fixed => {
                let fit = fit_method(method, &stats, cfg.c, cfg.lambda_tilde * stats.rate(), &cfg.admm, None)?;
                let err = val_error_of(&fit.rule)?;
                (fit, cfg.c, cfg.lambda_tilde, err, Vec::new())
            }
            ParameterMode::Theoretical if is_panda => {
                let (c, lambda) = theoretical_defaults(&stats);
                let fit = fit_method(method, &stats, c, lambda, &cfg.admm, None)?;
                let err = val_error_of(&fit.rule)?;
                (fit, c, lambda / stats.rate(), err, Vec::new())
            }
            _ => {
                let mut grid = cfg.grid.clone();
                grid.c_values = vec![cfg.c];
                let out = grid_search(&stats, &v0, &v1, method, &grid, &cfg.admm, cfg.warm_start)?;
                let err = out.best_val_error();
                (out.best_fit, out.best_c, out.best_lambda_tilde, Some(err), out.curve)
            }
        };
        stage(
            &mut stages,
            format!("fit: {method} with λ̃ = {lambda_tilde} ({})", fit.solver.status),
        );
        let test_error = empirical_error(&fit.rule, &t0, &t1)?;
        stage(&mut stages, format!("test: {method} error {test_error:.4}"));
        reports.push(MethodReport {
            method,
            c: is_panda.then_some(c),
            lambda_tilde,
            val_error,
            test_error,
            nnz: fit.beta_hat.iter().filter(|b| **b != 0.0).count(),
            tau_hat: fit.tau_hat,
            beta: names.iter().cloned().zip(fit.beta_hat.iter().copied()).collect(),
            curve,
        });
    }
    Ok(PipelineReport {
        stages,
        features_after_filter: filtered.p(),
        selected_features: names,
        split: manifest,
        methods: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn planted(n0: usize, n1: usize, p: usize, shift: f64, seed: u64) -> RealDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n0 + n1;
        let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        for i in n0..n {
            for j in 0..5 {
                x[(i, j)] += shift;
            }
        }
        let labels = (0..n).map(|i| u8::from(i >= n0)).collect();
        RealDataset::new(x, labels, None).unwrap()
    }

    #[test]
    fn planted_signal_is_recovered() {
        let data = planted(47, 25, 120, 1.5, 3);
        let cfg = PipelineConfig {
            variance_fraction: 0.0,
            grid: TuneGrid::range(0.2, 3.0, 0.2, vec![20.0]),
            ..PipelineConfig::default()
        };
        let report = run_pipeline_on(&data, &cfg).unwrap();
        assert_eq!(report.methods.len(), 1);
        assert!(report.methods[0].test_error < 0.2, "{}", report.methods[0].test_error);
        assert_eq!(report.split.train.len(), 44);
        let kinds: Vec<&str> = report.stages.iter().map(|s| s.split(':').next().unwrap()).collect();
        assert_eq!(kinds, vec!["load", "filter", "split", "select", "fit", "test"]);
    }
}
