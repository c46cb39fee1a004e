//! Newton iteration for `g_* u + lambda = v` on triples `(g, u, lambda)`,
//! with a quadratic-rate certificate and the finite-dimensional eliminations
//! of the counter-terms `B` (by moving `A`) and `beta` (by shifting actions).

mod certificate;
mod eliminate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::DMatrix;

use crate::cohomology::NormalOperator;
use crate::fourier::{FourierError, VectorFieldJet};
use crate::geometry::{pull_back, Conjugacy, GeometryError};
use crate::linearize::{
    moser_pulled, herman_pulled, russmann_pulled, CounterTerm, LinearizeError, LinearizeOptions, LinearizedSolution,
};

pub use certificate::{quadratic_certificate, Certificate};
pub use eliminate::{eliminate_translation_twist, eliminate_twist_matrix, shift_actions, TranslatedTorus, TwistedTorus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("residual grew from {from:.3e} to {to:.3e} at iteration {iter}")]
    DivergenceDetected { iter: usize, from: f64, to: f64 },
    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    MaxItersExceeded { iters: usize, residual: f64 },
    #[error("Fourier tail reached {ratio:.3e} of the head at iteration {iter}")]
    TailBlowup { iter: usize, ratio: f64 },
    #[error("initial residual {residual:.3e} above the admissibility bound {bound:.3e}")]
    Inadmissible { residual: f64, bound: f64 },
    #[error("need at least 3 decreasing residuals, got {got}")]
    InsufficientData { got: usize },
    #[error("eigenvalues of A are not simple, real and nonzero (gap {gap:.3e})")]
    EigenvalueCollision { gap: f64 },
    #[error("averaged twist has rank below {n} (smallest singular value {min_sv:.3e})")]
    RankDeficientTwist { n: usize, min_sv: f64 },
    #[error("{what} did not converge after {iters} steps (defect {defect:.3e})")]
    OuterNoConvergence { what: String, iters: usize, defect: f64 },
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Which linearized solver drives the iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Variant {
    /// General conjugacy, `lambda = (beta, b + B r)` with `b` in `ker A`.
    Moser,
    /// General conjugacy keeping `<R0> = 0`, `lambda = (beta, b + B r)` with `b` free.
    MoserTranslated,
    /// Exact symplectic conjugacy, `lambda = (beta, 0)`.
    HermanDissipative,
    /// Symplectic conjugacy, `lambda = (0, b)`; `free[a] = false` freezes angle `a`.
    Russmann { free: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    /// Initial analyticity width (diagnostic only).
    pub s: f64,
    /// Total width budget; the schedule is `sigma_k = sigma / 6 * 2^-k`.
    pub sigma: f64,
    pub max_iters: usize,
    /// Stop once `|g^*(v - lambda) - u| <= residual_tol * |v|`.
    pub residual_tol: f64,
    /// Abort when the residual grows by this factor in one step.
    pub divergence_guard: f64,
    /// Abort when the Fourier tail of the iterate exceeds this fraction of its head.
    pub tail_fraction: f64,
    /// Largest accepted relative residual at the starting point.
    pub admissibility: f64,
    pub linear: LinearizeOptions,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            s: 0.5,
            sigma: 0.3,
            max_iters: 30,
            residual_tol: 1e-11,
            divergence_guard: 10.0,
            tail_fraction: 1e-10,
            admissibility: 0.1,
            linear: LinearizeOptions::default(),
        }
    }
}

impl NewtonConfig {
    /// Diagnostic widths `(s_k, sigma_k)` for `k < count`:
    /// `sigma_k = sigma / 6 * 2^-k`, `s_{k+1} = s_k - 3 sigma_k`.
    pub fn schedule(&self, count: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(count);
        let mut s = self.s;
        for k in 0..count {
            let sk = self.sigma / 6.0 * 0.5f64.powi(k as i32);
            out.push((s, sk));
            s -= 3.0 * sk;
        }
        out
    }
}

/// A point `(g, u, lambda)` of the normal-form operator's domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub g: Conjugacy,
    pub u: VectorFieldJet,
    pub lambda: CounterTerm,
}

impl Triple {
    /// `(id, u0, 0)` with the identity in the flavor the variant needs.
    pub fn initial(variant: &Variant, u0: &VectorFieldJet) -> Self {
        let basis = u0.basis();
        let g = match variant {
            Variant::Moser | Variant::MoserTranslated => Conjugacy::identity(basis, u0.m()),
            Variant::HermanDissipative => Conjugacy::identity_symplectic(basis, true),
            Variant::Russmann { .. } => Conjugacy::identity_symplectic(basis, false),
        };
        Triple { g, u: u0.clone(), lambda: CounterTerm::zero(u0.n(), u0.m()) }
    }

    /// Pulled-back residual `g^*(v - lambda) - u`.
    pub fn residual_field(&self, v: &VectorFieldJet) -> Result<VectorFieldJet, NewtonError> {
        let target = v.sub(&self.lambda.field(self.g.basis()))?;
        let mut w = pull_back(&self.g, &target)?.sub(&self.u)?;
        w.frame = None;
        Ok(w)
    }

    /// Fourier tail over head, summed over all components of `g - id` and `u`.
    pub fn tail_ratio(&self) -> f64 {
        let mut tail = 0.0;
        let mut head = 0.0;
        let g = &self.g;
        for f in g.phi().iter().chain(g.r0()).chain(g.r1().iter().flatten()) {
            tail += f.tail_norm();
            head += f.l1();
        }
        for c in self.u.components() {
            tail += c.tail_norm();
            head += c.coeffs().iter().map(|f| f.l1()).sum::<f64>();
        }
        if head > 0.0 {
            tail / head
        } else {
            0.0
        }
    }
}

/// Outcome of a converged run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonResult {
    pub variant: Variant,
    pub x: Triple,
    /// Relative residual before each step; the last entry is the final one.
    pub residuals: Vec<f64>,
    pub certificate: Option<Certificate>,
    /// Tail-to-head ratio of the iterate before each step.
    pub tail_norms: Vec<f64>,
    /// Counter-term before each step.
    pub trace: Vec<CounterTerm>,
    /// Diagnostic `(s_k, sigma_k)` per step.
    pub widths: Vec<(f64, f64)>,
}

impl NewtonResult {
    pub fn iterations(&self) -> usize {
        self.residuals.len() - 1
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least one residual")
    }
}

fn linear_step(
    variant: &Variant,
    x: &Triple,
    w: &VectorFieldJet,
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    match variant {
        Variant::Moser => moser_pulled(&x.g, &x.u, w, false, opts),
        Variant::MoserTranslated => moser_pulled(&x.g, &x.u, w, true, opts),
        Variant::HermanDissipative => herman_pulled(&x.g, &x.u, w, opts),
        Variant::Russmann { free } => russmann_pulled(&x.g, &x.u, w, free, opts),
    }
}

/// One Newton step from `x`; returns the new triple and the relative residual at `x`.
pub fn newton_step(variant: &Variant, v: &VectorFieldJet, x: &Triple, cfg: &NewtonConfig) -> Result<(Triple, f64), NewtonError> {
    let vnorm = v.norm(0.0, 1.0).max(f64::MIN_POSITIVE);
    let w = x.residual_field(v)?;
    let r = w.norm(0.0, 1.0) / vnorm;
    let step = linear_step(variant, x, &w, &linear_options(cfg, vnorm))?;
    Ok((renormalize(variant, apply_step(x, &step)?)?, r))
}

/// `w` is a difference of terms of size `|v|`, so its jet is only known up to
/// a few hundred ulps of `|v|`.
fn linear_options(cfg: &NewtonConfig, vnorm: f64) -> LinearizeOptions {
    let mut o = cfg.linear;
    o.noise_floor = o.noise_floor.max(1e3 * f64::EPSILON * vnorm);
    o
}

/// Fix the gauge `r -> C r` (`C` commuting with `A`), which leaves the
/// equation invariant: rescale so that the commutant part of `<R1>` is the identity.
fn renormalize(variant: &Variant, x: Triple) -> Result<Triple, NewtonError> {
    if !matches!(variant, Variant::Moser | Variant::MoserTranslated) {
        return Ok(x);
    }
    let Some(frame) = x.u.frame.clone() else { return Ok(x) };
    let m = x.g.m();
    let minus_a: Vec<Vec<f64>> = frame.a.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let op = NormalOperator::new(&frame.alpha, &minus_a).map_err(crate::linearize::LinearizeError::from)?;
    let avg: Vec<Vec<f64>> = x.g.r1().iter().map(|row| row.iter().map(|f| f.average()).collect()).collect();
    let p = op.commutant_part(&avg);
    let pm = DMatrix::from_fn(m, m, |i, j| p[i][j]);
    let Some(c) = pm.try_inverse() else { return Ok(x) };
    if (&c - DMatrix::identity(m, m)).amax() == 0.0 {
        return Ok(x);
    }
    let z = x.g.r0()[0].constant_like(0.0);
    let h = Conjugacy::general(
        vec![z.clone(); x.g.n()],
        vec![z.clone(); m],
        (0..m).map(|i| (0..m).map(|j| z.constant_like(c[(i, j)])).collect()).collect(),
    )?;
    let g = x.g.compose(&h)?;
    let mut u = pull_back(&h, &x.u)?;
    u.frame = Some(frame);
    Ok(Triple { g, u, lambda: x.lambda })
}

fn apply_step(x: &Triple, step: &LinearizedSolution) -> Result<Triple, NewtonError> {
    let g = step.delta_g.apply_to(&x.g)?;
    let mut u = x.u.add(&step.delta_u)?;
    u.frame = x.u.frame.clone();
    Ok(Triple { g, u, lambda: x.lambda.add(&step.delta_lambda) })
}

/// Newton iteration `x <- x + Dphi(x)^{-1} (v - phi(x))` from `x0`.
pub fn newton_solve(variant: &Variant, v: &VectorFieldJet, x0: &Triple, cfg: &NewtonConfig) -> Result<NewtonResult, NewtonError> {
    let vnorm = v.norm(0.0, 1.0).max(f64::MIN_POSITIVE);
    let opts = linear_options(cfg, vnorm);
    let mut x = x0.clone();
    let mut residuals = Vec::new();
    let mut tails = Vec::new();
    let mut trace = Vec::new();
    for k in 0..=cfg.max_iters {
        let w = x.residual_field(v)?;
        let r = w.norm(0.0, 1.0) / vnorm;
        let tail = x.tail_ratio();
        log::debug!("newton iter {k}: residual {r:.3e}, tail {tail:.3e}");
        if k == 0 {
            // rough admissibility scale sigma^(2 tau) / 2^(8 tau) with tau = n and unit constants
            let tau = x.u.n() as f64;
            let bound = cfg.sigma.powf(2.0 * tau) / 2f64.powf(8.0 * tau);
            log::debug!("initial residual {r:.3e}, nominal smallness scale {bound:.3e}");
            if r > cfg.admissibility {
                return Err(NewtonError::Inadmissible { residual: r, bound: cfg.admissibility });
            }
        } else {
            let prev = residuals[k - 1];
            if r > cfg.divergence_guard * prev {
                return Err(NewtonError::DivergenceDetected { iter: k, from: prev, to: r });
            }
        }
        residuals.push(r);
        tails.push(tail);
        trace.push(x.lambda.clone());
        if tail > cfg.tail_fraction {
            return Err(NewtonError::TailBlowup { iter: k, ratio: tail });
        }
        if r <= cfg.residual_tol {
            let certificate = certificate_of(&residuals);
            let widths = cfg.schedule(residuals.len());
            return Ok(NewtonResult { variant: variant.clone(), x, residuals, certificate, tail_norms: tails, trace, widths });
        }
        if k == cfg.max_iters {
            break;
        }
        let step = linear_step(variant, &x, &w, &opts)?;
        x = renormalize(variant, apply_step(&x, &step)?)?;
    }
    Err(NewtonError::MaxItersExceeded { iters: cfg.max_iters, residual: *residuals.last().unwrap_or(&f64::NAN) })
}

/// Relative residuals below this only measure rounding, not the contraction.
const ROUNDING_FLOOR: f64 = 1e3 * f64::EPSILON;

/// Certificate over the strictly decreasing tail of the run, if long enough.
fn certificate_of(residuals: &[f64]) -> Option<Certificate> {
    let end = residuals.iter().position(|&r| r < ROUNDING_FLOOR).unwrap_or(residuals.len());
    let residuals = &residuals[..end];
    let mut start = residuals.len().saturating_sub(1);
    while start > 0 && residuals[start - 1] > residuals[start] {
        start -= 1;
    }
    quadratic_certificate(&residuals[start..]).ok()
}
