//! Small-divisor solvers for `L_alpha f = g`, `L_alpha f + A f = g` and
//! `L_alpha F + [A, F] = G`, and a scanner for the Diophantine conditions.

mod diophantine;
mod solvers;

use thiserror::Error;

use crate::fourier::FourierError;

pub use diophantine::{
    check_diophantine, estimate_gamma, for_each_mode, ConditionReport, DiophantineParams, DiophantineReport,
};
pub use solvers::{apply_matrix, apply_normal, solve_matrix, solve_normal, solve_tangent, NormalOperator, DIVISOR_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohomologyError {
    #[error("right-hand side has average {average:.3e}, above tolerance {tol:.3e}")]
    NonZeroAverage { average: f64, tol: f64 },
    #[error("resonant mode {k:?}: divisor {divisor:.3e}")]
    ResonantMode { k: Vec<i32>, divisor: f64 },
    #[error("small divisor {divisor:.3e} at mode {k:?}")]
    SmallDivisor { k: Vec<i32>, divisor: f64 },
    #[error("matrix is not safely diagonalizable (condition number {cond:.3e})")]
    DefectiveMatrix { cond: f64 },
    #[error("conjugated diagonal entry ({i}, {j}) has average {average:.3e}")]
    NonZeroDiagonalAverage { i: usize, j: usize, average: f64 },
    #[error("exact resonance at k = {k:?}")]
    ExactResonance { k: Vec<i32> },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Fourier(#[from] FourierError),
}
