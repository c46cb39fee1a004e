//! Truncated Fourier series on `T^n` and polynomial jets in the actions `r`,
//! with the weighted analytic norms `|f|_s = sum |f_k| e^{|k| s}`.
//!
//! Products are computed on a zero-padded grid of `4K + 4` points per axis,
//! which is enough to make the truncated convolution exact.

mod grid;
mod jet;
mod series;

use thiserror::Error;

pub use grid::{Basis, Grid};
pub use jet::{monomial, monomial_count, pair_index, Frame, Jet01, RJet, SeriesMatrix, VectorFieldJet};
pub(crate) use jet::GridJet;
pub use series::{eval_many_multi, FourierSeries, DEFAULT_COMPOSE_TOL};
pub(crate) use series::shifted_grid_points;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("truncation order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("mode {mode:?} exceeds truncation order {order}")]
    ModeOutOfRange { mode: Vec<i32>, order: usize },
    #[error("jet action counts differ: {left} vs {right}")]
    JetMismatch { left: usize, right: usize },
    #[error("jet needs {expected} coefficients, got {got}")]
    JetShape { expected: usize, got: usize },
    #[error("composition diverged: outer-band mass {outer:.3e} exceeds {tol:.1e}")]
    CompositionDivergence { outer: f64, tol: f64 },
}

/// Random real series with coefficients decaying like `e^{-decay |k|}`.
pub fn random_series<R: rand::Rng>(rng: &mut R, dim: usize, order: usize, decay: f64) -> FourierSeries {
    use num_complex::Complex64;
    let mut f = FourierSeries::zeros(dim, order);
    let basis = f.basis().clone();
    for i in 0..basis.len() {
        let w = (-decay * basis.l1(i) as f64).exp();
        let re = rng.gen_range(-1.0..1.0) * w;
        let im = if i == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) * w };
        f.coeffs_mut()[i] = Complex64::new(re, im);
    }
    f
}
