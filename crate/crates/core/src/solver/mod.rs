//! Conic program assembly and the proximal ADMM solver.

pub mod admm;
pub mod cones;
pub mod program;

pub use admm::{admm_step, solve, AdmmConfig, AdmmState, Solution, SolveStatus, StepSizes, TraceRow};
pub use cones::{project_nonneg, project_soc, prox_l1};
pub use program::{
    assemble_adalda_stage1_program, assemble_linf_program, assemble_lpd_program, assemble_panda_for,
    assemble_panda_program, ConicProgram,
};
