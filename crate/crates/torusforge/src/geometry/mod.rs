//! Conjugacies `g(theta, r) = (phi(theta), R0(theta) + R1(theta) r)`, their
//! inverses, and the transport of vector-field jets by them.

mod conjugacy;
mod linalg;
mod transport;

use thiserror::Error;

use crate::fourier::FourierError;

pub use conjugacy::{invert_conjugacy, invert_torus_map, invert_torus_map_grid, Conjugacy, Flavor};
pub use linalg::{inverse_small, min_singular_value};
pub use transport::{
    deformed_norm, hamiltonian_field, lie_bracket, pull_back, pull_back_report, push_forward,
    push_forward_ham_dissipative,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("torus map inversion is not contracting (Lipschitz bound {lip:.3e})")]
    ContractionFailure { lip: f64 },
    #[error("R1 is singular on the grid (min singular value {min_sv:.3e})")]
    SingularR1 { min_sv: f64 },
    #[error("torus map does not fix the origin (phi(0) - 0 = {value:.3e})")]
    OriginNotFixed { value: f64 },
    #[error("torus map derivative is singular on the grid")]
    SingularJacobian,
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("operation needs a symplectic conjugacy")]
    NotSymplectic,
    #[error(transparent)]
    Fourier(#[from] FourierError),
}
