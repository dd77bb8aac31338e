//! Sparse high-dimensional linear discriminant analysis.
//!
//! The PANDA estimator solves
//!
//! ```text
//! min ‖β‖₁ + c·τ²  s.t.  ‖Σ̂β − μ̂d‖∞ ≤ λσ̂max(τ + 1),  √(βᵀΣ̂β) ≤ τ
//! ```
//!
//! jointly estimating the discriminant direction `β*` and the signal-to-noise
//! ratio `Δ`. The LPD and AdaLDA baselines share the same proximal ADMM
//! solver. Around them sit synthetic data generators, evaluation metrics, a
//! validation-split tuner and a replicate harness.

pub mod datagen;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod normal;
pub mod oracle;
pub mod pipeline;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use model::{classify, compute_suff_stats, from_moments, population_risk, GaussianModel, LinearRule, SuffStats};
pub use normal::std_normal_cdf;
