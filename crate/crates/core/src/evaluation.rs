//! Estimation, selection and classification metrics, and replicate aggregation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::LinearRule;

/// `(‖β̂ − β*‖₁, ‖β̂ − β*‖₂)`.
pub fn estimation_errors(beta_hat: &DVector<f64>, beta_star: &DVector<f64>) -> Result<(f64, f64)> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::InvalidInput(format!(
            "lengths differ: {} vs {}",
            beta_hat.len(),
            beta_star.len()
        )));
    }
    let diff = beta_hat - beta_star;
    Ok((diff.lp_norm(1), diff.norm()))
}

/// `|τ̂² − Δ²| / Δ²`.
pub fn tau_relative_error(tau_hat: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let d2 = delta * delta;
    Ok((tau_hat * tau_hat - d2).abs() / d2)
}

fn scores(rule: &LinearRule, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.nrows() > 0 && x.ncols() != rule.dim() {
        return Err(Error::InvalidInput(format!(
            "rule has dimension {}, data has {} columns",
            rule.dim(),
            x.ncols()
        )));
    }
    // (x − 1αᵀ)β without materializing the centered matrix
    let shift = rule.alpha.dot(&rule.beta);
    Ok((x * &rule.beta).iter().map(|v| v - shift).collect())
}

/// Fraction of pooled test points misclassified by `1{βᵀ(z − α) > 0}`.
pub fn empirical_error(rule: &LinearRule, test0: &DMatrix<f64>, test1: &DMatrix<f64>) -> Result<f64> {
    let total = test0.nrows() + test1.nrows();
    if total == 0 {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let wrong0 = scores(rule, test0)?.iter().filter(|&&s| s > 0.0).count();
    let wrong1 = scores(rule, test1)?.iter().filter(|&&s| s <= 0.0).count();
    Ok((wrong0 + wrong1) as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Selection {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `TP/(TP+FP)`, 1 when nothing is selected.
    pub precision: f64,
    /// `TP/(TP+FN)`, 1 when the true support is empty.
    pub recall: f64,
}

/// Support recovery of `{j : |β̂ⱼ| > threshold}` against `{j : β*ⱼ ≠ 0}`.
pub fn variable_selection(beta_hat: &DVector<f64>, beta_star: &DVector<f64>, threshold: f64) -> Result<Selection> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::InvalidInput("lengths differ".into()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (b, t) in beta_hat.iter().zip(beta_star.iter()) {
        match (b.abs() > threshold, *t != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(Selection {
        tp,
        tn,
        fp,
        fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

/// Mann–Whitney AUC: probability a class-1 score exceeds a class-0 score,
/// ties counted as one half.
pub fn auc_scores(scores0: &[f64], scores1: &[f64]) -> Result<f64> {
    if scores0.is_empty() || scores1.is_empty() {
        return Err(Error::InvalidInput("AUC needs at least one sample per class".into()));
    }
    if scores0.iter().chain(scores1).any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("AUC scores contain NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = scores0
        .iter()
        .map(|&s| (s, false))
        .chain(scores1.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum of midranks of class 1
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (n0, n1) = (scores0.len() as f64, scores1.len() as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n0 * n1))
}

/// AUC of the score `βᵀ(z − α)`.
pub fn auc(rule: &LinearRule, test0: &DMatrix<f64>, test1: &DMatrix<f64>) -> Result<f64> {
    auc_scores(&scores(rule, test0)?, &scores(rule, test1)?)
}

/// One replicate of one method.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub replicate: usize,
    pub seed: u64,
    pub method: String,
    pub model: String,
    pub p: usize,
    pub s: usize,
    pub n: usize,
    pub c: Option<f64>,
    pub lambda_tilde: Option<f64>,
    pub l1_err: f64,
    pub l2_err: f64,
    pub tau_rel_err: Option<f64>,
    pub pop_risk: f64,
    pub test_err: f64,
    pub tp: f64,
    pub tn: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub nnz: usize,
    pub iterations: usize,
    pub status: String,
    #[serde(skip)]
    pub wall_time_s: f64,
}

pub const METRIC_NAMES: [&str; 10] = [
    "l1_err",
    "l2_err",
    "tau_rel_err",
    "pop_risk",
    "test_err",
    "tp",
    "tn",
    "precision",
    "recall",
    "auc",
];

impl MetricsRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "l1_err" => Some(self.l1_err),
            "l2_err" => Some(self.l2_err),
            "tau_rel_err" => self.tau_rel_err,
            "pop_risk" => Some(self.pop_risk),
            "test_err" => Some(self.test_err),
            "tp" => Some(self.tp),
            "tn" => Some(self.tn),
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "auc" => Some(self.auc),
            "wall_time_s" => Some(self.wall_time_s),
            _ => None,
        }
    }
}

/// A replicate/method pair whose fit failed.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub replicate: usize,
    pub method: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation, divisor `R − 1` (0 when `R = 1`).
    pub sd: f64,
    pub count: usize,
    pub failures: usize,
}

/// Mean and sample standard deviation of each metric per method, in order of
/// first appearance. Failed replicates are excluded and counted.
pub fn aggregate(rows: &[MetricsRow], failures: &[Failure]) -> Vec<SummaryRow> {
    let mut order: Vec<String> = Vec::new();
    for name in rows.iter().map(|r| &r.method).chain(failures.iter().map(|f| &f.method)) {
        if !order.contains(name) {
            order.push(name.clone());
        }
    }
    let mut failed: BTreeMap<&str, usize> = BTreeMap::new();
    for f in failures {
        *failed.entry(f.method.as_str()).or_default() += 1;
    }
    let mut out = Vec::new();
    for method in &order {
        let group: Vec<&MetricsRow> = rows.iter().filter(|r| &r.method == method).collect();
        for metric in METRIC_NAMES.iter().chain(std::iter::once(&"wall_time_s")) {
            let values: Vec<f64> = group.iter().filter_map(|r| r.metric(metric)).collect();
            if values.is_empty() && !group.is_empty() {
                continue;
            }
            let (mean, sd) = mean_sd(&values);
            out.push(SummaryRow {
                method: method.clone(),
                metric: metric.to_string(),
                mean,
                sd,
                count: values.len(),
                failures: failed.get(method.as_str()).copied().unwrap_or(0),
            });
        }
    }
    out
}

/// Mean and sample standard deviation; `(NaN, NaN)` for an empty slice.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    // sort so the result does not depend on replicate order
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / r as f64;
    if r == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (r - 1) as f64).sqrt())
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
