use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{newton_solve, NewtonConfig, NewtonError, NewtonResult, Triple, Variant};
use crate::fourier::{RJet, VectorFieldJet};

const ELIMINATION_TOL: f64 = 1e-10;
const MAX_OUTER: usize = 30;

/// Normal form `v = g_* u + beta d_theta` with `u` in `U(alpha, A)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwistedTorus {
    pub result: NewtonResult,
    pub a: Vec<Vec<f64>>,
    pub outer_iters: usize,
    /// Smallest distance between eigenvalues of `A` and from 0.
    pub eigen_gap: f64,
}

/// Normal form `v(theta, c + r) = g_* u + b d_r` with the twist removed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranslatedTorus {
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub twisted: TwistedTorus,
    pub outer_iters: usize,
}

fn matrix(a: &[Vec<f64>]) -> DMatrix<f64> {
    let m = a.len();
    DMatrix::from_fn(m, m, |i, j| a[i][j])
}

/// Eigenvalue gap of `A`, failing unless the spectrum is simple, real and nonzero.
fn eigen_gap(a: &[Vec<f64>]) -> Result<f64, NewtonError> {
    let eig = matrix(a).complex_eigenvalues();
    let scale = eig.iter().fold(1.0f64, |s, z| s.max(z.norm()));
    let mut gap = f64::INFINITY;
    for (i, z) in eig.iter().enumerate() {
        gap = gap.min(z.norm());
        for w in eig.iter().skip(i + 1) {
            gap = gap.min((z - w).norm());
        }
    }
    let real = eig.iter().all(|z| z.im.abs() <= 1e-12 * scale);
    if !real || gap < 1e-6 {
        return Err(NewtonError::EigenvalueCollision { gap: if real { gap } else { 0.0 } });
    }
    Ok(gap)
}

/// Move `db` from the counter-term into the normal matrix of `u`.
fn shift_normal_matrix(x: &Triple, db: &[Vec<f64>]) -> Triple {
    let mut x = x.clone();
    let m = db.len();
    for i in 0..m {
        for j in 0..m {
            let l = x.u.normal[i].linear_term(j).clone();
            x.u.normal[i].set_linear(j, &l + &l.constant_like(db[i][j]));
            x.lambda.bmat[i][j] -= db[i][j];
        }
    }
    if let Some(f) = x.u.frame.as_mut() {
        for i in 0..m {
            for j in 0..m {
                f.a[i][j] += db[i][j];
            }
        }
    }
    x
}

fn twist_from(variant: &Variant, v: &VectorFieldJet, x0: Triple, cfg: &NewtonConfig) -> Result<TwistedTorus, NewtonError> {
    let frame = x0.u.frame.as_ref().ok_or(crate::linearize::LinearizeError::MissingFrame)?;
    let mut a = frame.a.clone();
    let mut gap = eigen_gap(&a)?;
    let mut x = x0;
    let mut defect = f64::INFINITY;
    for outer in 1..=MAX_OUTER {
        let result = newton_solve(variant, v, &x, cfg)?;
        let bmat = result.x.lambda.bmat.clone();
        defect = bmat.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
        log::debug!("twist elimination step {outer}: |B| = {defect:.3e}");
        if defect <= ELIMINATION_TOL {
            return Ok(TwistedTorus { result, a, outer_iters: outer, eigen_gap: gap });
        }
        // dB/dA = -id: absorb B into A
        x = shift_normal_matrix(&result.x, &bmat);
        a = x.u.frame.as_ref().expect("frame kept").a.clone();
        gap = eigen_gap(&a)?;
    }
    Err(NewtonError::OuterNoConvergence { what: "twist elimination".into(), iters: MAX_OUTER, defect })
}

/// Adjust the normal matrix `A` (starting from the one carried by `u0`) until
/// the counter-term `B` vanishes. `A` must have simple, real, nonzero eigenvalues.
pub fn eliminate_twist_matrix(v: &VectorFieldJet, u0: &VectorFieldJet, cfg: &NewtonConfig) -> Result<TwistedTorus, NewtonError> {
    twist_from(&Variant::Moser, v, Triple::initial(&Variant::Moser, u0), cfg)
}

/// `v(theta, c + r)`.
pub fn shift_actions(v: &VectorFieldJet, c: &[f64]) -> Result<VectorFieldJet, NewtonError> {
    let m = v.m();
    let basis = v.basis().clone();
    let w: Vec<RJet> = (0..m)
        .map(|i| {
            let mut j = RJet::zero(&basis, m);
            j.set_const(j.const_term().constant_like(c[i]));
            j.set_linear(i, j.const_term().constant_like(1.0));
            j
        })
        .collect();
    let sub = |x: &RJet| x.substitute(&w).map(|(j, _)| j);
    Ok(VectorFieldJet {
        tangent: v.tangent.iter().map(sub).collect::<Result<_, _>>()?,
        normal: v.normal.iter().map(sub).collect::<Result<_, _>>()?,
        frame: None,
    })
}

/// `tau_{-d} o g` realizes `v(theta, r + d)` whenever `g` realizes `v`:
/// move the average of `R0` into the action shift.
fn fold_r0_average(x: &mut Triple, c: &mut nalgebra::DVector<f64>) -> Result<(), NewtonError> {
    let d: Vec<f64> = x.g.r0().iter().map(|f| f.average()).collect();
    let r0 = x.g.r0().iter().zip(&d).map(|(f, &a)| f - &f.constant_like(a)).collect();
    x.g = crate::geometry::Conjugacy::general(x.g.phi().to_vec(), r0, x.g.r1().clone())?;
    for (ci, di) in c.iter_mut().zip(&d) {
        *ci += di;
    }
    Ok(())
}

/// Translated normal form of `v(theta, c + r)` from the identity, with the
/// average of `R0` folded into the returned effective shift.
#[cfg(test)]
pub(crate) fn translated_twist_at(
    v: &VectorFieldJet,
    u0: &VectorFieldJet,
    c: &[f64],
    cfg: &NewtonConfig,
) -> Result<(TwistedTorus, Vec<f64>), NewtonError> {
    let variant = Variant::MoserTranslated;
    let mut c = nalgebra::DVector::from_column_slice(c);
    let vc = shift_actions(v, c.as_slice())?;
    let mut tw = twist_from(&variant, &vc, Triple::initial(&variant, u0), cfg)?;
    fold_r0_average(&mut tw.result.x, &mut c)?;
    Ok((tw, c.as_slice().to_vec()))
}

/// Find the action shift `c` for which the frequency counter-term `beta`
/// vanishes (after eliminating `B`), in the translated normal form with
/// `<R0> = 0` and `b` free. Needs `m >= n` and `<u1>` of rank `n`.
pub fn eliminate_translation_twist(
    v: &VectorFieldJet,
    u0: &VectorFieldJet,
    cfg: &NewtonConfig,
) -> Result<TranslatedTorus, NewtonError> {
    let (n, m) = (u0.n(), u0.m());
    if m < n {
        return Err(NewtonError::RankDeficientTwist { n, min_sv: 0.0 });
    }
    let u1 = u0.u1();
    let avg = DMatrix::from_fn(n, m, |a, j| u1[a][j].average());
    let svd = avg.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let min_sv = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    log::debug!("averaged twist singular values {:?}", svd.singular_values.as_slice());
    if !(min_sv > 1e-8 * smax.max(1.0)) {
        return Err(NewtonError::RankDeficientTwist { n, min_sv });
    }
    // inverse-Jacobian estimate for c -> beta(c), refined by Broyden updates
    let mut h = svd.pseudo_inverse(1e-12).expect("both factors computed");
    let mut c = nalgebra::DVector::<f64>::zeros(m);
    let variant = Variant::MoserTranslated;
    let mut x = Triple::initial(&variant, u0);
    let mut prev: Option<(nalgebra::DVector<f64>, nalgebra::DVector<f64>)> = None;
    let mut defect = f64::INFINITY;
    for outer in 1..=MAX_OUTER {
        let vc = shift_actions(v, c.as_slice())?;
        let mut tw = twist_from(&variant, &vc, x.clone(), cfg)?;
        fold_r0_average(&mut tw.result.x, &mut c)?;
        let beta = nalgebra::DVector::from_column_slice(&tw.result.x.lambda.beta);
        defect = beta.amax();
        log::debug!("translation elimination step {outer}: c = {:?}, |beta| = {defect:.3e}", c.as_slice());
        if defect <= ELIMINATION_TOL {
            let b = tw.result.x.lambda.b.clone();
            return Ok(TranslatedTorus { c: c.as_slice().to_vec(), b, twisted: tw, outer_iters: outer });
        }
        if let Some((c_old, beta_old)) = &prev {
            let dc = &c - c_old;
            let db = &beta - beta_old;
            let hdb = &h * &db;
            let denom = dc.dot(&hdb);
            if denom.abs() > 1e-300 {
                h += (&dc - &hdb) * (dc.transpose() * &h) / denom;
            }
        }
        prev = Some((c.clone(), beta.clone()));
        c -= &h * &beta;
        x = tw.result.x.clone();
    }
    Err(NewtonError::OuterNoConvergence { what: "translation elimination".into(), iters: MAX_OUTER, defect })
}
