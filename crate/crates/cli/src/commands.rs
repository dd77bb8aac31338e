use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use panda::datagen::{build_model, sample, stream_seed, SimSpec};
use panda::dataset::{load_multiclass_csv, MultiClassData};
use panda::estimators::{kclass_classify, kclass_panda_fit_stats, kclass_stats, kclass_theoretical_c, KClassFit};
use panda::evaluation::SummaryRow;
use panda::experiment::{
    config_from_manifest, prefixed, run_replicates, write_outputs, CurveRow, ExperimentConfig, ParameterMode,
};
use panda::oracle::run_oracle_suite;
use panda::pipeline::{run_pipeline, PipelineConfig, PipelineReport};
use serde::Serialize;

use crate::config::{self, delimiter_byte, FitConfig, KclassConfig};
use crate::error::CliError;
use crate::{Common, Data, Design, FitArgs, KclassArgs, OracleArgs, SimulateArgs, TuneArgs};

fn init_threads(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // fails only if a pool exists already, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn override_experiment(cfg: &mut ExperimentConfig, common: &Common, design: &Design) {
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = &common.out {
        cfg.output = v.clone();
    }
    if !common.method.is_empty() {
        cfg.methods = common.method.clone();
    }
    if let Some(v) = common.c {
        cfg.c = v;
        cfg.c_values = vec![v];
    }
    if let Some(v) = common.lambda_tilde {
        cfg.lambda_tilde = v;
    }
    if let Some(v) = common.mode {
        cfg.mode = v;
    }
    if let Some(v) = design.model {
        cfg.model = v;
    }
    if let Some(v) = design.p {
        cfg.p = v;
    }
    if let Some(v) = design.s {
        cfg.s = v;
    }
    if let Some(v) = design.n {
        cfg.n0 = v;
        cfg.n1 = v;
    }
    if let Some(v) = design.replicates {
        cfg.replicates = v;
    }
}

fn override_fit(cfg: &mut FitConfig, common: &Common, data: &Data) {
    if let Some(v) = &data.data {
        cfg.data = Some(v.clone());
    }
    if let Some(v) = &data.label_column {
        cfg.label_column = v.clone();
    }
    if let Some(v) = data.delimiter {
        cfg.delimiter = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.out {
        cfg.output = v.clone();
    }
    if !common.method.is_empty() {
        cfg.methods = common.method.clone();
    }
    if let Some(v) = common.c {
        cfg.c = v;
    }
    if let Some(v) = common.lambda_tilde {
        cfg.lambda_tilde = v;
    }
    if let Some(v) = common.mode {
        cfg.mode = v;
    }
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a T,
}

fn write_manifest<T: Serialize>(prefix: &Path, command: &str, seed: u64, config: &T) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "panda",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(panda::Error::from)?;
    fs::write(prefix.with_file_name("run_manifest.json"), json).map_err(panda::Error::from)?;
    Ok(())
}

fn ensure_parent(prefix: &Path) -> Result<(), CliError> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(panda::Error::from)?;
    }
    Ok(())
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(panda::Error::from)?;
    for r in records {
        w.serialize(r).map_err(panda::Error::from)?;
    }
    w.flush().map_err(panda::Error::from)?;
    Ok(())
}

fn print_summary(summary: &[SummaryRow]) {
    println!("{:<8} {:<12} {:>10} {:>10} {:>5}", "method", "metric", "mean", "sd", "n");
    for s in summary
        .iter()
        .filter(|s| ["pop_risk", "test_err", "l2_err", "tp", "tau_rel_err"].contains(&s.metric.as_str()))
    {
        println!("{:<8} {:<12} {:>10.4} {:>10.4} {:>5}", s.method, s.metric, s.mean, s.sd, s.count);
    }
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = match &a.manifest {
        Some(path) => config_from_manifest(path)?,
        None => config::load(a.common.config.as_deref())?,
    };
    override_experiment(&mut cfg, &a.common, &a.design);
    cfg.validate()?;
    log::info!("simulating {} replicates of {} p={} s={}", cfg.replicates, cfg.model, cfg.p, cfg.s);
    let out = run_replicates(&cfg)?;
    let files = write_outputs(&cfg, &out)?;
    print_summary(&out.summary);
    println!("rows: {}", files.rows.display());
    println!("summary: {}", files.summary.display());
    if !out.failures.is_empty() {
        return Err(CliError::Solver(format!(
            "{} fits failed, see {}",
            out.failures.len(),
            files.failures.as_ref().map_or_else(String::new, |p| p.display().to_string())
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct BetaRow<'a> {
    method: &'a str,
    feature: &'a str,
    beta: f64,
}

fn run_fit(cfg: &FitConfig) -> Result<(PipelineConfig, PipelineReport), CliError> {
    let pipeline = cfg.pipeline()?;
    delimiter_byte(cfg.delimiter)?;
    let report = run_pipeline(&pipeline)?;
    Ok((pipeline, report))
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    init_threads(a.common.jobs);
    let mut cfg: FitConfig = config::load(a.common.config.as_deref())?;
    override_fit(&mut cfg, &a.common, &a.data);
    if let Some(m) = a.top_m {
        cfg.top_m = m;
    }
    let (_, report) = run_fit(&cfg)?;
    let prefix = cfg.output.clone();
    ensure_parent(&prefix)?;
    let mut betas = Vec::new();
    for m in &report.methods {
        for (name, b) in &m.beta {
            betas.push(BetaRow {
                method: m.method.name(),
                feature: name,
                beta: *b,
            });
        }
    }
    write_records(&prefixed(&prefix, "_beta.csv"), &betas)?;
    report.split.write_jsonl(&prefixed(&prefix, "_split.jsonl"))?;
    let json = serde_json::to_string_pretty(&report).map_err(panda::Error::from)?;
    fs::write(prefixed(&prefix, "_report.json"), json).map_err(panda::Error::from)?;
    write_manifest(&prefix, "fit", cfg.seed, &cfg)?;
    println!("features after filter: {}, screened: {}", report.features_after_filter, report.selected_features.len());
    for m in &report.methods {
        println!(
            "{}: lambda_tilde {} validation error {} test error {:.4} nonzero {}",
            m.method,
            m.lambda_tilde,
            m.val_error.map_or_else(|| "-".into(), |e| format!("{e:.4}")),
            m.test_error,
            m.nnz
        );
    }
    Ok(())
}

fn config_has_key(path: Option<&Path>, key: &str) -> Result<bool, CliError> {
    let Some(path) = path else {
        return Ok(false);
    };
    let table: toml::Table = config::load_table(path)?;
    Ok(table.contains_key(key))
}

pub fn tune(a: TuneArgs) -> Result<(), CliError> {
    let config_path = a.common.config.as_deref();
    if a.data.data.is_some() || config_has_key(config_path, "data")? {
        init_threads(a.common.jobs);
        let mut cfg: FitConfig = config::load(config_path)?;
        override_fit(&mut cfg, &a.common, &a.data);
        cfg.mode = ParameterMode::Practical;
        let (_, report) = run_fit(&cfg)?;
        let mut rows = Vec::new();
        for m in &report.methods {
            for pt in &m.curve {
                rows.push(CurveRow {
                    replicate: 0,
                    method: m.method.to_string(),
                    c: pt.c,
                    lambda_tilde: pt.lambda_tilde,
                    val_error: pt.val_error,
                    pop_risk: None,
                    l2_err: None,
                    tau_hat: pt.tau_hat,
                    iterations: pt.iterations,
                });
            }
            println!(
                "{}: best lambda_tilde {} validation error {:.4}",
                m.method,
                m.lambda_tilde,
                m.val_error.unwrap_or(f64::NAN)
            );
        }
        ensure_parent(&cfg.output)?;
        write_records(&prefixed(&cfg.output, "_curve.csv"), &rows)?;
        write_manifest(&cfg.output, "tune", cfg.seed, &cfg)?;
        return Ok(());
    }

    let mut cfg: ExperimentConfig = config::load(config_path)?;
    if a.design.replicates.is_none() && !config_has_key(config_path, "replicates")? {
        cfg.replicates = 1;
    }
    override_experiment(&mut cfg, &a.common, &a.design);
    cfg.mode = ParameterMode::Practical;
    cfg.write_curve = true;
    cfg.write_trace = false;
    cfg.validate()?;
    let out = run_replicates(&cfg)?;
    ensure_parent(&cfg.output)?;
    write_records(&prefixed(&cfg.output, "_curve.csv"), &out.curves)?;
    write_manifest(&cfg.output, "tune", cfg.seed, &cfg)?;
    for r in &out.rows {
        println!(
            "replicate {} {}: best lambda_tilde {} population risk {:.4}",
            r.replicate,
            r.method,
            r.lambda_tilde.map_or_else(|| "-".into(), |v| v.to_string()),
            r.pop_risk
        );
    }
    if !out.failures.is_empty() {
        return Err(CliError::Solver(format!("{} fits failed", out.failures.len())));
    }
    Ok(())
}

pub fn oracle_check(a: OracleArgs) -> Result<(), CliError> {
    if a.p_max == 0 || a.p_max > 3 {
        return Err(CliError::Usage(format!("--p-max must be 1, 2 or 3, got {}", a.p_max)));
    }
    let reports = run_oracle_suite(a.instances, a.p_max, a.seed)?;
    let gap = reports.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
    let violation = reports.iter().map(|r| r.violation).fold(0.0, f64::max);
    if let Some(path) = &a.out {
        ensure_parent(path)?;
        write_records(path, &reports)?;
    }
    println!("comparisons: {}", reports.len());
    println!("max relative gap: {gap:.3e} (limit {:.1e})", a.gap_tol);
    println!("max violation: {violation:.3e} (limit {:.1e})", a.violation_tol);
    if gap > a.gap_tol || violation > a.violation_tol {
        return Err(CliError::Threshold("solver disagrees with the grid oracle".into()));
    }
    Ok(())
}

fn override_kclass(cfg: &mut KclassConfig, a: &KclassArgs) {
    let (common, design, data) = (&a.common, &a.design, &a.data);
    if let Some(v) = &data.data {
        cfg.data = Some(v.clone());
    }
    if let Some(v) = &a.test {
        cfg.test = Some(v.clone());
    }
    if let Some(v) = &data.label_column {
        cfg.label_column = v.clone();
    }
    if let Some(v) = data.delimiter {
        cfg.delimiter = v;
    }
    if let Some(v) = a.classes {
        cfg.classes = v;
    }
    if let Some(v) = design.model {
        cfg.model = v;
    }
    if let Some(v) = design.p {
        cfg.p = v;
    }
    if let Some(v) = design.s {
        cfg.s = v;
    }
    if let Some(v) = design.n {
        cfg.n = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.out {
        cfg.output = v.clone();
    }
    if let Some(v) = common.c {
        cfg.c = v;
    }
    if let Some(v) = common.lambda_tilde {
        cfg.lambda_tilde = v;
    }
    if let Some(v) = common.mode {
        cfg.mode = v;
    }
}

/// Training and test matrices per class, and the class names.
type ClassData = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<String>, Vec<String>);

fn kclass_data(cfg: &KclassConfig) -> Result<ClassData, CliError> {
    if let Some(path) = &cfg.data {
        let delim = delimiter_byte(cfg.delimiter)?;
        let train: MultiClassData = load_multiclass_csv(path, &cfg.label_column, delim)?;
        if train.classes.len() < 2 {
            return Err(CliError::Usage(format!("{} has fewer than two classes", path.display())));
        }
        let test = match &cfg.test {
            Some(tp) => {
                let test = load_multiclass_csv(tp, &cfg.label_column, delim)?;
                if test.feature_names != train.feature_names {
                    return Err(CliError::Usage("test columns differ from the training columns".into()));
                }
                if let Some(bad) = test.classes.iter().find(|c| !train.classes.contains(c)) {
                    return Err(CliError::Usage(format!("test label '{bad}' does not occur in the training data")));
                }
                let parts = test.class_matrices();
                train
                    .classes
                    .iter()
                    .map(|c| match test.classes.iter().position(|t| t == c) {
                        Some(k) => parts[k].clone(),
                        None => DMatrix::zeros(0, train.x.ncols()),
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        return Ok((train.class_matrices(), test, train.classes, train.feature_names));
    }
    if cfg.classes < 2 {
        return Err(CliError::Usage("kclass needs at least two classes".into()));
    }
    let model = build_model(&SimSpec::new(cfg.model, cfg.p, cfg.s, cfg.seed))?;
    let shift = model.mu_d();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 0..cfg.classes {
        let (x, _) = sample(&model, cfg.n + cfg.n_test, 1, stream_seed(cfg.seed, 10 + k as u64))?;
        let mut x = x;
        for mut row in x.row_iter_mut() {
            row += shift.transpose() * k as f64;
        }
        train.push(x.rows(0, cfg.n).into_owned());
        test.push(x.rows(cfg.n, cfg.n_test).into_owned());
    }
    let names = (1..=cfg.classes).map(|k| k.to_string()).collect();
    let features = (0..cfg.p).map(|j| format!("x{j}")).collect();
    Ok((train, test, names, features))
}

fn kclass_error(fit: &KClassFit, parts: &[DMatrix<f64>]) -> Result<Option<f64>, CliError> {
    let total: usize = parts.iter().map(|x| x.nrows()).sum();
    if total == 0 {
        return Ok(None);
    }
    let mut wrong = 0;
    for (k, x) in parts.iter().enumerate() {
        for i in 0..x.nrows() {
            let z: Vec<f64> = x.row(i).iter().copied().collect();
            wrong += usize::from(kclass_classify(fit, &z)? != k + 1);
        }
    }
    Ok(Some(wrong as f64 / total as f64))
}

#[derive(Serialize)]
struct ClassBetaRow<'a> {
    class: &'a str,
    feature: &'a str,
    beta: f64,
}

pub fn kclass(a: KclassArgs) -> Result<(), CliError> {
    init_threads(a.common.jobs);
    let mut cfg: KclassConfig = config::load(a.common.config.as_deref())?;
    override_kclass(&mut cfg, &a);
    let (train, test, classes, features) = kclass_data(&cfg)?;
    let (stats, means) = kclass_stats(&train)?;
    let rate = stats.rate();
    let (c_list, lambda) = match cfg.mode {
        ParameterMode::Theoretical => (kclass_theoretical_c(&stats, &means), 20.0 * rate),
        _ => (vec![cfg.c; classes.len() - 1], cfg.lambda_tilde * rate),
    };
    let fit = kclass_panda_fit_stats(&stats, &means, &c_list, lambda, &cfg.admm(), None)?;
    let train_err = kclass_error(&fit, &train)?;
    let test_err = kclass_error(&fit, &test)?;

    ensure_parent(&cfg.output)?;
    let mut rows = Vec::new();
    for (k, beta) in fit.betas.iter().enumerate() {
        for (j, b) in beta.iter().enumerate() {
            rows.push(ClassBetaRow {
                class: &classes[k + 1],
                feature: &features[j],
                beta: *b,
            });
        }
    }
    write_records(&prefixed(&cfg.output, "_beta.csv"), &rows)?;
    write_manifest(&cfg.output, "kclass", cfg.seed, &cfg)?;
    println!("classes: {} (reference {})", classes.join(", "), classes[0]);
    for (k, s) in fit.solvers.iter().enumerate() {
        let nnz = fit.betas[k].iter().filter(|b| **b != 0.0).count();
        println!("class {}: {} after {} iterations, {nnz} nonzero", classes[k + 1], s.status, s.iterations);
    }
    if let Some(e) = train_err {
        println!("training error: {e:.4}");
    }
    if let Some(e) = test_err {
        println!("test error: {e:.4}");
    }
    Ok(())
}
