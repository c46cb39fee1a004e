//! Reference solvers that assemble the whole truncated linear system as a
//! dense real matrix and solve it by generic least squares.
//!
//! Columns are images of unit unknowns under the forward operator
//! `(dg, dlambda) -> j01(g^* dlambda - [dg, u])`, built from the generic bracket
//! and pull-back; the normalizations of the fast solvers are appended as rows.
//! Sizes grow like the square of the basis, so these are for small `K` only.

use std::sync::Arc;

use num_complex::Complex64;

use super::moser::CounterBasis;
use super::{CounterTerm, DeltaG, LinearizeError};
use crate::cohomology::NormalOperator;
use crate::fourier::{Basis, FourierSeries, Jet01, VectorFieldJet};
use crate::geometry::{lie_bracket, pull_back, Conjugacy};

fn series_len(basis: &Basis) -> usize {
    2 * basis.len() - 1
}

fn to_reals(f: &FourierSeries, out: &mut Vec<f64>) {
    out.push(f.coeffs()[0].re);
    for c in &f.coeffs()[1..] {
        out.push(c.re);
        out.push(c.im);
    }
}

fn from_reals(basis: &Arc<Basis>, x: &[f64]) -> FourierSeries {
    let mut f = FourierSeries::zeros_on(basis.clone());
    f.coeffs_mut()[0] = Complex64::new(x[0], 0.0);
    for i in 1..basis.len() {
        f.coeffs_mut()[i] = Complex64::new(x[2 * i - 1], x[2 * i]);
    }
    f
}

/// Row functional `f -> f(0)` in real coordinates.
fn origin_row(basis: &Basis) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 1..basis.len() {
        row.push(2.0);
        row.push(0.0);
    }
    row
}

fn jet_reals(j: &Jet01) -> Vec<f64> {
    let mut out = Vec::new();
    for f in j.t0.iter().chain(&j.n0).chain(j.n1.iter().flatten()) {
        to_reals(f, &mut out);
    }
    out
}

/// Generic dense solve: `build` maps an unknown vector to `(dg, dlambda)`;
/// `norm_rows` are extra homogeneous constraints.
fn dense_solve(
    g: &Conjugacy,
    u: &VectorFieldJet,
    w: &VectorFieldJet,
    unknowns: usize,
    build: &dyn Fn(&[f64]) -> Result<(DeltaG, CounterTerm), LinearizeError>,
    norm_rows: &[Vec<f64>],
) -> Result<Vec<f64>, LinearizeError> {
    let forward = |x: &[f64]| -> Result<Vec<f64>, LinearizeError> {
        let (dg, dl) = build(x)?;
        let ld = pull_back(g, &dl.field(g.basis()))?;
        let br = lie_bracket(&dg.field(), u)?;
        Ok(jet_reals(&ld.sub(&br)?.j01()))
    };
    let mut cols = Vec::with_capacity(unknowns);
    for c in 0..unknowns {
        let mut e = vec![0.0; unknowns];
        e[c] = 1.0;
        let mut col = forward(&e)?;
        col.extend(norm_rows.iter().map(|r| r[c]));
        cols.push(col);
    }
    let mut rhs = jet_reals(&w.j01());
    rhs.extend(std::iter::repeat(0.0).take(norm_rows.len()));
    Ok(super::least_squares(&cols, &rhs).0)
}

/// Dense reference for the general (Moser) step on a pulled-back residual `w`.
pub fn dense_moser(g: &Conjugacy, u: &VectorFieldJet, w: &VectorFieldJet) -> Result<(DeltaG, CounterTerm), LinearizeError> {
    dense_moser_impl(g, u, w, false)
}

/// Dense reference for the translated Moser step (`<R0_dot> = 0`, `b` free).
pub fn dense_moser_translated(
    g: &Conjugacy,
    u: &VectorFieldJet,
    w: &VectorFieldJet,
) -> Result<(DeltaG, CounterTerm), LinearizeError> {
    dense_moser_impl(g, u, w, true)
}

fn dense_moser_impl(
    g: &Conjugacy,
    u: &VectorFieldJet,
    w: &VectorFieldJet,
    translated: bool,
) -> Result<(DeltaG, CounterTerm), LinearizeError> {
    let frame = u.frame.as_ref().ok_or(LinearizeError::MissingFrame)?;
    let (n, m) = (u.n(), u.m());
    let basis = g.basis().clone();
    let minus_a: Vec<Vec<f64>> = frame.a.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
    let op = NormalOperator::new(&frame.alpha, &minus_a)?;
    let cb = CounterBasis::moser(&op, n, translated);
    let sl = series_len(&basis);
    let nser = n + m + m * m;
    let unknowns = nser * sl + cb.elems.len();
    let build = |x: &[f64]| -> Result<(DeltaG, CounterTerm), LinearizeError> {
        let ser: Vec<FourierSeries> = (0..nser).map(|q| from_reals(&basis, &x[q * sl..(q + 1) * sl])).collect();
        let phi = ser[..n].to_vec();
        let r0 = ser[n..n + m].to_vec();
        let r1 = (0..m).map(|i| ser[n + m + i * m..n + m + (i + 1) * m].to_vec()).collect();
        Ok((DeltaG { phi, r0, r1, s: None, xi: Vec::new() }, cb.combine(&x[nser * sl..])))
    };
    let mut rows = Vec::new();
    let orow = origin_row(&basis);
    for a in 0..n {
        let mut r = vec![0.0; unknowns];
        r[a * sl..(a + 1) * sl].copy_from_slice(&orow);
        rows.push(r);
    }
    // kernel part (or all) of <R0> and commutant part of <R1> vanish
    for i in 0..m {
        let mut r = vec![0.0; unknowns];
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            r[(n + j) * sl] = if translated { e[i] } else { op.kernel_part(&e)[i] };
        }
        rows.push(r);
    }
    for q in 0..m * m {
        let mut r = vec![0.0; unknowns];
        for p in 0..m * m {
            let mut e = vec![vec![0.0; m]; m];
            e[p / m][p % m] = 1.0;
            r[(n + m + p) * sl] = op.commutant_part(&e)[q / m][q % m];
        }
        rows.push(r);
    }
    let x = dense_solve(g, u, w, unknowns, &build, &rows)?;
    build(&x)
}

fn symplectic_build(
    basis: &Arc<Basis>,
    n: usize,
    x: &[f64],
    frozen: &[bool],
) -> Result<DeltaG, LinearizeError> {
    let sl = series_len(basis);
    let mut phi = Vec::with_capacity(n);
    let mut q = 0;
    for &fz in frozen {
        if fz {
            phi.push(FourierSeries::zeros_on(basis.clone()));
        } else {
            phi.push(from_reals(basis, &x[q * sl..(q + 1) * sl]));
            q += 1;
        }
    }
    let s = from_reals(basis, &x[q * sl..(q + 1) * sl]);
    let mut r0 = Vec::with_capacity(n);
    for a in 0..n {
        r0.push(s.differentiate(a)?);
    }
    let mut r1 = vec![Vec::with_capacity(n); n];
    for (i, row) in r1.iter_mut().enumerate() {
        for p in &phi {
            row.push(p.differentiate(i)?.scale(-1.0));
        }
    }
    Ok(DeltaG { phi, r0, r1, s: Some(s), xi: vec![0.0; n] })
}

/// Dense reference for the dissipative Herman step: unknowns `(phi_dot, S_dot, dbeta)`.
pub fn dense_herman(g: &Conjugacy, u: &VectorFieldJet, w: &VectorFieldJet) -> Result<(DeltaG, CounterTerm), LinearizeError> {
    let n = u.n();
    let basis = g.basis().clone();
    let sl = series_len(&basis);
    let frozen = vec![false; n];
    let unknowns = (n + 1) * sl + n;
    let build = |x: &[f64]| -> Result<(DeltaG, CounterTerm), LinearizeError> {
        let dg = symplectic_build(&basis, n, x, &frozen)?;
        let mut dl = CounterTerm::zero(n, n);
        dl.beta.copy_from_slice(&x[(n + 1) * sl..]);
        Ok((dg, dl))
    };
    let orow = origin_row(&basis);
    let rows: Vec<Vec<f64>> = (0..=n)
        .map(|a| {
            let mut r = vec![0.0; unknowns];
            r[a * sl..(a + 1) * sl].copy_from_slice(&orow);
            r
        })
        .collect();
    let x = dense_solve(g, u, w, unknowns, &build, &rows)?;
    build(&x)
}

/// Dense reference for the Rüssmann step: unknowns `(phi_dot, S_dot, xi_dot, db)`
/// over the free angles.
pub fn dense_russmann(
    g: &Conjugacy,
    u: &VectorFieldJet,
    w: &VectorFieldJet,
    free: &[bool],
) -> Result<(DeltaG, CounterTerm), LinearizeError> {
    let n = u.n();
    let basis = g.basis().clone();
    let sl = series_len(&basis);
    let frozen: Vec<bool> = free.iter().map(|f| !f).collect();
    let idx: Vec<usize> = (0..n).filter(|&a| free[a]).collect();
    let nf = idx.len();
    let unknowns = (nf + 1) * sl + 2 * nf;
    let build = |x: &[f64]| -> Result<(DeltaG, CounterTerm), LinearizeError> {
        let mut dg = symplectic_build(&basis, n, x, &frozen)?;
        let off = (nf + 1) * sl;
        let mut dl = CounterTerm::zero(n, n);
        for (q, &a) in idx.iter().enumerate() {
            dg.xi[a] = x[off + q];
            dg.r0[a] = &dg.r0[a] + &dg.r0[a].constant_like(x[off + q]);
            dl.b[a] = x[off + nf + q];
        }
        Ok((dg, dl))
    };
    let orow = origin_row(&basis);
    let rows: Vec<Vec<f64>> = (0..=nf)
        .map(|a| {
            let mut r = vec![0.0; unknowns];
            r[a * sl..(a + 1) * sl].copy_from_slice(&orow);
            r
        })
        .collect();
    let x = dense_solve(g, u, w, unknowns, &build, &rows)?;
    build(&x)
}
