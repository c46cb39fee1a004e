//! Moser-type normal forms for analytic vector fields near Diophantine
//! invariant tori, and their application to the dissipative spin-orbit problem.

pub mod fourier;
pub mod cohomology;
pub mod geometry;
pub mod linearize;
pub mod newton;
pub mod spinorbit;
pub mod verify;

#[cfg(test)]
mod testutil;
