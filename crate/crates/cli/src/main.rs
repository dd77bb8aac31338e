//! `panda`: simulation replicates, data fits, tuning curves, solver checks
//! and K-class fits.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panda::datagen::ModelKind;
use panda::estimators::Method;
use panda::experiment::ParameterMode;

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "panda", version, about = "Tuning-insensitive sparse LDA: simulations, fits and solver checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded simulation replicates and write result tables
    Simulate(SimulateArgs),
    /// Filter, split, screen, tune and fit a labelled CSV
    Fit(FitArgs),
    /// Write validation curves for simulated data or a CSV
    Tune(TuneArgs),
    /// Compare the solver with grid-search oracles on small random problems
    OracleCheck(OracleArgs),
    /// K-class PANDA on a CSV or on simulated classes
    Kclass(KclassArgs),
}

/// Flags shared by the fitting subcommands.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 uses all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output path prefix
    #[arg(long)]
    out: Option<PathBuf>,
    /// Methods, comma separated: panda, lpd, adalda, kpanda, bayes
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long = "lambda-tilde")]
    lambda_tilde: Option<f64>,
    /// theoretical, practical or fixed
    #[arg(long)]
    mode: Option<ParameterMode>,
}

/// Simulation design flags.
#[derive(Args, Debug, Default)]
struct Design {
    /// ar1, varying_diagonal, erdos_renyi, block_sparse or approx_sparse
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// Training samples per class
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
}

/// Dataset flags.
#[derive(Args, Debug, Default)]
struct Data {
    /// Labelled CSV with a header row
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "label-column")]
    label_column: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    design: Design,
    /// Re-run the config recorded in a run_manifest.json
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: Data,
    /// Features kept by t-test screening
    #[arg(long = "top-m")]
    top_m: Option<usize>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    design: Design,
    #[command(flatten)]
    data: Data,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Random instances per dimension
    #[arg(long, default_value_t = 10)]
    instances: usize,
    /// Largest dimension (at most 3)
    #[arg(long = "p-max", default_value_t = 3)]
    p_max: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest allowed relative objective gap
    #[arg(long = "gap-tol", default_value_t = 1e-2)]
    gap_tol: f64,
    /// Largest allowed constraint violation
    #[arg(long = "violation-tol", default_value_t = 1e-6)]
    violation_tol: f64,
    /// Also write the per-instance report as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KclassArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    design: Design,
    #[command(flatten)]
    data: Data,
    /// Test CSV for `--data`
    #[arg(long)]
    test: Option<PathBuf>,
    /// Number of simulated classes
    #[arg(long)]
    classes: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PANDA_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Tune(a) => commands::tune(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
        Command::Kclass(a) => commands::kclass(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
