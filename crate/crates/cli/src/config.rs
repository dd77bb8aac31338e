//! Flat TOML config files. Every key is optional; flags override the file.

use std::fs;
use std::path::{Path, PathBuf};

use panda::dataset::SplitCounts;
use panda::datagen::ModelKind;
use panda::estimators::Method;
use panda::experiment::ParameterMode;
use panda::pipeline::PipelineConfig;
use panda::solver::AdmmConfig;
use panda::tuning::TuneGrid;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    toml::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_table(path: &Path) -> Result<toml::Table, CliError> {
    read(path)?
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Settings of `fit` and of `tune --data`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub label_column: String,
    pub delimiter: char,
    pub variance_fraction: f64,
    pub top_m: usize,
    pub methods: Vec<Method>,
    pub mode: ParameterMode,
    pub c: f64,
    pub lambda_tilde: f64,
    pub lambda_tilde_min: f64,
    pub lambda_tilde_max: f64,
    pub lambda_tilde_step: f64,
    pub warm_start: bool,
    pub seed: u64,
    pub train0: usize,
    pub train1: usize,
    pub val0: usize,
    pub val1: usize,
    pub test0: usize,
    pub test1: usize,
    pub rho: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub change_tol: f64,
    pub output: PathBuf,
}

impl Default for FitConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let g = TuneGrid::default();
        let s = SplitCounts::LEUKEMIA;
        Self {
            data: None,
            label_column: p.label_column,
            delimiter: p.delimiter,
            variance_fraction: p.variance_fraction,
            top_m: p.top_m,
            methods: p.methods,
            mode: p.mode,
            c: p.c,
            lambda_tilde: p.lambda_tilde,
            lambda_tilde_min: g.lambda_tilde_values[0],
            lambda_tilde_max: *g.lambda_tilde_values.last().unwrap_or(&8.0),
            lambda_tilde_step: 0.1,
            warm_start: p.warm_start,
            seed: p.seed,
            train0: s.train0,
            train1: s.train1,
            val0: s.val0,
            val1: s.val1,
            test0: s.test0,
            test1: s.test1,
            rho: p.admm.rho,
            max_iters: p.admm.max_iters,
            primal_tol: p.admm.primal_tol,
            change_tol: p.admm.change_tol,
            output: PathBuf::from("panda_fit"),
        }
    }
}

impl FitConfig {
    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let data = self
            .data
            .clone()
            .ok_or_else(|| CliError::Usage("no dataset given (use --data or the `data` key)".into()))?;
        Ok(PipelineConfig {
            data,
            label_column: self.label_column.clone(),
            delimiter: self.delimiter,
            variance_fraction: self.variance_fraction,
            split: SplitCounts {
                train0: self.train0,
                train1: self.train1,
                val0: self.val0,
                val1: self.val1,
                test0: self.test0,
                test1: self.test1,
            },
            top_m: self.top_m,
            methods: self.methods.clone(),
            mode: self.mode,
            c: self.c,
            lambda_tilde: self.lambda_tilde,
            grid: TuneGrid::range(
                self.lambda_tilde_min,
                self.lambda_tilde_max,
                self.lambda_tilde_step,
                vec![self.c],
            ),
            admm: admm(self.rho, self.max_iters, self.primal_tol, self.change_tol),
            warm_start: self.warm_start,
            seed: self.seed,
        })
    }
}

/// Settings of `kclass`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KclassConfig {
    /// Training CSV; classes are simulated when absent.
    pub data: Option<PathBuf>,
    /// Optional test CSV with the same columns.
    pub test: Option<PathBuf>,
    pub label_column: String,
    pub delimiter: char,
    pub classes: usize,
    pub model: ModelKind,
    pub p: usize,
    pub s: usize,
    /// Training samples per simulated class.
    pub n: usize,
    /// Test samples per simulated class.
    pub n_test: usize,
    pub seed: u64,
    pub mode: ParameterMode,
    pub c: f64,
    pub lambda_tilde: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub change_tol: f64,
    pub output: PathBuf,
}

impl Default for KclassConfig {
    fn default() -> Self {
        let a = AdmmConfig::default();
        Self {
            data: None,
            test: None,
            label_column: "label".into(),
            delimiter: ',',
            classes: 3,
            model: ModelKind::Ar1,
            p: 100,
            s: 5,
            n: 200,
            n_test: 500,
            seed: 1,
            mode: ParameterMode::Practical,
            c: 20.0,
            lambda_tilde: 1.0,
            rho: a.rho,
            max_iters: a.max_iters,
            primal_tol: a.primal_tol,
            change_tol: a.change_tol,
            output: PathBuf::from("panda_kclass"),
        }
    }
}

impl KclassConfig {
    pub fn admm(&self) -> AdmmConfig {
        admm(self.rho, self.max_iters, self.primal_tol, self.change_tol)
    }
}

fn admm(rho: f64, max_iters: usize, primal_tol: f64, change_tol: f64) -> AdmmConfig {
    AdmmConfig {
        rho,
        max_iters,
        primal_tol,
        change_tol,
        ..AdmmConfig::default()
    }
}

pub fn delimiter_byte(d: char) -> Result<u8, CliError> {
    if d.is_ascii() {
        Ok(d as u8)
    } else {
        Err(CliError::Usage(format!("delimiter '{d}' is not a single ASCII character")))
    }
}
