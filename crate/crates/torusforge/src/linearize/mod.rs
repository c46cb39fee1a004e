//! Solvers for the linearized conjugacy equation `g^*(dv) = du - [dg, u] + g^* dlambda`
//! around a triple `(g, u, lambda)`, in three flavors: general (Moser),
//! dissipative Herman (exact symplectic, `lambda = (beta, 0)`) and Rüssmann
//! (symplectic, `lambda = (0, b)`).
//!
//! Every solver works on the pulled-back residual `w = g^*(v - lambda) - u`
//! and returns an increment `dg` (in the Lie algebra, composed on the right),
//! `du` with vanishing low-order jet, and `dlambda`.

mod moser;
pub mod oracle;
mod symplectic;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::CohomologyError;
use crate::fourier::{Basis, FourierError, FourierSeries, Jet01, SeriesMatrix, VectorFieldJet};
use crate::geometry::{lie_bracket, pull_back, Conjugacy, GeometryError};

pub(crate) use moser::moser_pulled;
pub use moser::{solve_linearized_moser, solve_linearized_moser_translated};
pub(crate) use symplectic::{herman_pulled, russmann_pulled};
pub use symplectic::{solve_linearized_herman_dissipative, solve_linearized_russmann};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizeError {
    #[error("counter-term system is degenerate (smallest singular value {min_sv:.3e})")]
    NonInvertibleCounterTermSystem { min_sv: f64 },
    #[error("input is outside the Hamiltonian class: {what} of size {size:.3e}")]
    ClassViolation { what: String, size: f64 },
    #[error("torsion is degenerate: |det| = {det:.3e} below {bound:.3e}")]
    DegenerateTorsion { det: f64, bound: f64 },
    #[error("conjugacy is {distance:.3e} away from the identity, above the gate {gate:.3e}")]
    GateExceeded { distance: f64, gate: f64 },
    #[error("forward residual {residual:.3e} above tolerance {tol:.3e}")]
    ForwardResidual { residual: f64, tol: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("the unperturbed field carries no (alpha, A) frame")]
    MissingFrame,
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Constant counter-term field `(beta, b + B r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterTerm {
    pub beta: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "B")]
    pub bmat: Vec<Vec<f64>>,
}

impl CounterTerm {
    pub fn zero(n: usize, m: usize) -> Self {
        CounterTerm { beta: vec![0.0; n], b: vec![0.0; m], bmat: vec![vec![0.0; m]; m] }
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn add(&self, o: &Self) -> Self {
        CounterTerm {
            beta: self.beta.iter().zip(&o.beta).map(|(a, b)| a + b).collect(),
            b: self.b.iter().zip(&o.b).map(|(a, b)| a + b).collect(),
            bmat: self.bmat.iter().zip(&o.bmat).map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + b).collect()).collect(),
        }
    }

    /// Largest entry in absolute value.
    pub fn norm(&self) -> f64 {
        self.beta.iter().chain(&self.b).chain(self.bmat.iter().flatten()).fold(0.0, |s, x| s.max(x.abs()))
    }

    pub fn field(&self, basis: &Arc<Basis>) -> VectorFieldJet {
        let m = self.m();
        let mut f = VectorFieldJet::zero(basis, m);
        for (t, &x) in f.tangent.iter_mut().zip(&self.beta) {
            let c = t.const_term().constant_like(x);
            t.set_const(c);
        }
        for i in 0..m {
            let c = f.normal[i].const_term().constant_like(self.b[i]);
            f.normal[i].set_const(c);
            for j in 0..m {
                let c = f.normal[i].const_term().constant_like(self.bmat[i][j]);
                f.normal[i].set_linear(j, c);
            }
        }
        f
    }
}

/// Infinitesimal conjugacy `dg(theta, r) = (phi_dot, R0_dot + R1_dot r)`.
///
/// Symplectic increments also keep `(S_dot, xi_dot)`, from which
/// `R0_dot = dS_dot + xi_dot` and `R1_dot = -t(phi_dot')`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaG {
    pub phi: Vec<FourierSeries>,
    pub r0: Vec<FourierSeries>,
    pub r1: SeriesMatrix,
    #[serde(default)]
    pub s: Option<FourierSeries>,
    #[serde(default)]
    pub xi: Vec<f64>,
}

impl DeltaG {
    pub fn field(&self) -> VectorFieldJet {
        let basis = self.phi[0].basis().clone();
        let m = self.r0.len();
        let mut f = VectorFieldJet::zero(&basis, m);
        for (t, p) in f.tangent.iter_mut().zip(&self.phi) {
            t.set_const(p.clone());
        }
        for i in 0..m {
            f.normal[i].set_const(self.r0[i].clone());
            for j in 0..m {
                f.normal[i].set_linear(j, self.r1[i][j].clone());
            }
        }
        f
    }

    pub fn scale(&self, a: f64) -> Self {
        DeltaG {
            phi: self.phi.iter().map(|f| f.scale(a)).collect(),
            r0: self.r0.iter().map(|f| f.scale(a)).collect(),
            r1: self.r1.iter().map(|row| row.iter().map(|f| f.scale(a)).collect()).collect(),
            s: self.s.as_ref().map(|f| f.scale(a)),
            xi: self.xi.iter().map(|x| a * x).collect(),
        }
    }

    /// Largest coefficient l1 norm among the components.
    pub fn norm(&self) -> f64 {
        let mut d: f64 = self.xi.iter().fold(0.0, |s, x| s.max(x.abs()));
        for f in self.phi.iter().chain(&self.r0).chain(self.r1.iter().flatten()) {
            d = d.max(f.l1());
        }
        d
    }

    /// `g o (id + dg)` up to second order; symplectic conjugacies stay in
    /// their class: `phi + phi' phi_dot`, `S + S_dot + (dS + xi) . phi_dot`,
    /// `xi + xi_dot`.
    pub fn apply_to(&self, g: &Conjugacy) -> Result<Conjugacy, LinearizeError> {
        let n = g.n();
        match (g.generator(), &self.s) {
            (Some(s), Some(sd)) => {
                let mut v = Vec::with_capacity(n);
                for a in 0..n {
                    let mut va = &g.phi()[a] + &self.phi[a];
                    for b in 0..n {
                        let d = g.phi()[a].differentiate(b)?;
                        va += &d.multiply(&self.phi[b])?;
                    }
                    v.push(va);
                }
                pin_origin(&mut v);
                let mut s_new = s + sd;
                for b in 0..n {
                    let ds = &s.differentiate(b)? + &s.constant_like(g.xi()[b]);
                    s_new += &ds.multiply(&self.phi[b])?;
                }
                let xi: Vec<f64> = g.xi().iter().zip(&self.xi).map(|(a, b)| a + b).collect();
                Ok(Conjugacy::symplectic(v, s_new, xi)?)
            }
            _ => {
                let m = g.m();
                let r1: SeriesMatrix = (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| {
                                let f = &self.r1[i][j];
                                if i == j {
                                    f + &f.constant_like(1.0)
                                } else {
                                    f.clone()
                                }
                            })
                            .collect()
                    })
                    .collect();
                let mut phi = self.phi.clone();
                pin_origin(&mut phi);
                let h = Conjugacy::general(phi, self.r0.clone(), r1)?;
                Ok(g.compose(&h)?)
            }
        }
    }
}

pub(crate) fn pin_origin(v: &mut [FourierSeries]) {
    for f in v.iter_mut() {
        let x = f.eval(&vec![0.0; f.dim()]);
        f.set_average(f.average() - x);
    }
}

/// Result of a linearized solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizedSolution {
    pub delta_g: DeltaG,
    pub delta_u: VectorFieldJet,
    pub delta_lambda: CounterTerm,
    /// `|j01(w - g^* dlambda + [dg, u])| / |w|` through the generic bracket.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizeOptions {
    /// Largest accepted `|g - id|` in l1 coefficient norm.
    pub gate: f64,
    /// Relative forward residual above which the solve fails.
    pub residual_tol: f64,
    /// Absolute slack added to the forward-residual test, for right-hand
    /// sides that are themselves at the rounding level of the data.
    #[serde(default)]
    pub noise_floor: f64,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        LinearizeOptions { gate: 0.1, residual_tol: 1e-9, noise_floor: 0.0 }
    }
}

pub(crate) fn check_gate(g: &Conjugacy, opts: &LinearizeOptions) -> Result<(), LinearizeError> {
    let distance = g.distance_from_identity();
    if distance > opts.gate {
        return Err(LinearizeError::GateExceeded { distance, gate: opts.gate });
    }
    Ok(())
}

pub(crate) fn j01_zero(basis: &Arc<Basis>, n: usize, m: usize) -> Jet01 {
    let z = FourierSeries::zeros_on(basis.clone());
    Jet01 { t0: vec![z.clone(); n], n0: vec![z.clone(); m], n1: vec![vec![z; m]; m] }
}

pub(crate) fn j01_scaled(x: &Jet01, a: f64) -> Jet01 {
    Jet01 {
        t0: x.t0.iter().map(|f| f.scale(a)).collect(),
        n0: x.n0.iter().map(|f| f.scale(a)).collect(),
        n1: x.n1.iter().map(|r| r.iter().map(|f| f.scale(a)).collect()).collect(),
    }
}

/// Low-order jet of `g^* lambda` for a constant counter-term.
pub(crate) fn pulled_counter_term(g: &Conjugacy, l: &CounterTerm) -> Result<Jet01, LinearizeError> {
    Ok(pull_back(g, &l.field(g.basis()))?.j01())
}

/// Real least squares `J x = rhs` with `J` given column by column.
/// Returns the solution and the singular values of `J`.
pub(crate) fn least_squares(cols: &[Vec<f64>], rhs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let rows = rhs.len();
    let ncol = cols.len();
    if ncol == 0 {
        return (Vec::new(), Vec::new());
    }
    let j = DMatrix::from_fn(rows, ncol, |i, k| cols[k][i]);
    let svd = j.svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let b = DMatrix::from_column_slice(rows, 1, rhs);
    let x = svd.solve(&b, 1e-14 * smax.max(f64::MIN_POSITIVE)).expect("svd has both factors");
    (x.iter().cloned().collect(), sv)
}

/// Assemble `du = w - lambda_dot + [dg, u]`, return it with its low-order jet
/// removed, the relative size of that jet and whether it passes the
/// forward-residual test of `opts`.
pub(crate) fn finish(
    w: &VectorFieldJet,
    lambda_dot: &VectorFieldJet,
    dg: &DeltaG,
    u: &VectorFieldJet,
    opts: &LinearizeOptions,
) -> Result<(VectorFieldJet, f64, bool), LinearizeError> {
    let full = w.sub(lambda_dot)?.add(&lie_bracket(&dg.field(), u)?)?;
    let wn = w.j01().norm();
    let abs = full.j01().norm();
    let residual = abs / wn.max(f64::MIN_POSITIVE);
    let accepted = wn == 0.0 || abs <= opts.residual_tol * wn + opts.noise_floor;
    let mut du = full.higher();
    du.frame = None;
    Ok((du, residual, accepted))
}

pub(crate) fn check_shapes(g: &Conjugacy, u: &VectorFieldJet, w: &VectorFieldJet) -> Result<(), LinearizeError> {
    if u.n() != g.n() || u.m() != g.m() || w.n() != g.n() || w.m() != g.m() {
        return Err(LinearizeError::Shape { expected: g.n() + g.m(), got: w.n() + w.m() });
    }
    Ok(())
}
