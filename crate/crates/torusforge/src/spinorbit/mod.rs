//! Dissipative spin-orbit model `theta'' + eta (theta' - nu) + eps d_theta f(theta, t) = 0`
//! on the extended phase space `T^2 x R^2`, its translated-torus normal form and the
//! elimination of the translation `b` by tuning the drive frequency `nu`.

mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{estimate_gamma, CohomologyError};
use crate::fourier::{Basis, FourierSeries, Frame, RJet, VectorFieldJet};
use crate::geometry::{hamiltonian_field, push_forward, GeometryError};
use crate::newton::{newton_solve, NewtonConfig, NewtonError, NewtonResult, Triple, Variant};

pub use sweep::{sweep_curve, sweep_surface, to_csv, PointOutcome, SweepRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinOrbitError {
    #[error("b has the same sign at both ends of [{lo}, {hi}] ({b_lo:.3e}, {b_hi:.3e})")]
    RootBracketingFailure { lo: f64, hi: f64, b_lo: f64, b_hi: f64 },
    #[error("root search stopped after {iters} steps with |b| = {b:.3e}")]
    NoConvergence { iters: usize, b: f64 },
    #[error("|eta| = {eta:.3e} is below {min:.3e}: b does not depend on nu")]
    StructurallyExcluded { eta: f64, min: f64 },
    #[error("forward residual {residual:.3e} above {tol:.3e}")]
    ForwardResidual { residual: f64, tol: f64 },
    #[error("frequency (alpha, 1) is resonant: {0}")]
    Resonant(CohomologyError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One term `cos_amp cos(k . theta) + sin_amp sin(k . theta)` of the potential,
/// `theta = (theta_1, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialMode {
    pub k: [i32; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `cos theta_1 + 1/2 cos(theta_1 - t)`.
pub fn default_potential() -> Vec<PotentialMode> {
    vec![PotentialMode { k: [1, 0], cos: 1.0, sin: 0.0 }, PotentialMode { k: [1, -1], cos: 0.5, sin: 0.0 }]
}

fn default_order() -> usize {
    20
}

fn default_min_eta() -> f64 {
    1e-3
}

fn default_root_tol() -> f64 {
    1e-11
}

fn default_forward_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinOrbitProblem {
    pub alpha: f64,
    pub eta: f64,
    pub nu: f64,
    pub epsilon: f64,
    #[serde(default = "default_potential")]
    pub potential: Vec<PotentialMode>,
    /// Fourier truncation `K` on `T^2`.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Smallest `|eta|` accepted by [`eliminate_nu`].
    #[serde(default = "default_min_eta")]
    pub min_eta: f64,
    /// Target `|b(nu*)|`.
    #[serde(default = "default_root_tol")]
    pub root_tol: f64,
    /// Largest accepted `|g_* u + b d_r - v|` of the normal form.
    #[serde(default = "default_forward_tol")]
    pub forward_tol: f64,
    #[serde(default)]
    pub newton: NewtonConfig,
}

impl SpinOrbitProblem {
    /// Problem with the default potential, truncation and tolerances.
    pub fn new(alpha: f64, eta: f64, nu: f64, epsilon: f64) -> Self {
        SpinOrbitProblem {
            alpha,
            eta,
            nu,
            epsilon,
            potential: default_potential(),
            order: default_order(),
            min_eta: default_min_eta(),
            root_tol: default_root_tol(),
            forward_tol: default_forward_tol(),
            newton: NewtonConfig::default(),
        }
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        SpinOrbitProblem { nu, ..self.clone() }
    }

    pub fn basis(&self) -> std::sync::Arc<Basis> {
        Basis::get(2, self.order)
    }

    /// `f` as a series on `T^2`.
    pub fn potential_series(&self) -> FourierSeries {
        let mut f = FourierSeries::zeros(2, self.order);
        for m in &self.potential {
            f += &FourierSeries::cos_mode(2, self.order, &m.k, m.cos);
            f += &FourierSeries::sin_mode(2, self.order, &m.k, m.sin);
        }
        f
    }

    /// `(f, d_theta1 f, d_t f)` at a point, straight from the mode list.
    pub fn potential_eval(&self, theta: f64, t: f64) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for m in &self.potential {
            let ph = m.k[0] as f64 * theta + m.k[1] as f64 * t;
            let (s, c) = ph.sin_cos();
            out.0 += m.cos * c + m.sin * s;
            let d = -m.cos * s + m.sin * c;
            out.1 += m.k[0] as f64 * d;
            out.2 += m.k[1] as f64 * d;
        }
        out
    }

    /// Fail on an exact resonance of `(alpha, 1)` up to the truncation order.
    pub fn check_frequency(&self) -> Result<f64, SpinOrbitError> {
        estimate_gamma(&[self.alpha, 1.0], 2.0, self.order).map_err(SpinOrbitError::Resonant)
    }

    /// `H = alpha r1 + r2 + r1^2 / 2 + eps f`.
    fn hamiltonian(&self, eps: f64) -> RJet {
        let b = self.basis();
        let mut h = RJet::zero(&b, 2);
        let z = h.const_term().clone();
        h.set_const(self.potential_series().scale(eps));
        h.set_linear(0, z.constant_like(self.alpha));
        h.set_linear(1, z.constant_like(1.0));
        h.set_quad(0, 0, z.constant_like(0.5));
        h
    }
}

/// Tangent `(alpha + r1, 1)`, normal
/// `(-eta r1 + eta (nu - alpha) - eps d_theta1 f, -eta r2 - eps d_t f)`.
pub fn build_extended_field(p: &SpinOrbitProblem) -> VectorFieldJet {
    hamiltonian_field(&p.hamiltonian(p.epsilon), p.eta, &[p.nu - p.alpha, 0.0]).expect("n = m = 2 by construction")
}

/// The `eps = 0`, `nu = alpha` field in `U(alpha_bar, -eta Id)`, carrying its frame.
pub fn unperturbed_field(p: &SpinOrbitProblem) -> VectorFieldJet {
    let mut u = hamiltonian_field(&p.hamiltonian(0.0), p.eta, &[0.0, 0.0]).expect("n = m = 2 by construction");
    u.frame = Some(Frame { alpha: vec![p.alpha, 1.0], a: vec![vec![-p.eta, 0.0], vec![0.0, -p.eta]] });
    u
}

/// `t` stays the time: `phi_2 = theta_2`, `xi_2 = 0`, `b_2 = 0`.
pub fn spin_orbit_variant() -> Variant {
    Variant::Russmann { free: vec![true, false] }
}

/// `v = g_* u + b d_r1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpinOrbitNormalForm {
    pub b: f64,
    pub result: NewtonResult,
    /// `|g_* u + b d_r1 - v|` through the generic push-forward.
    pub forward_residual: f64,
}

pub fn translated_torus_normal_form(p: &SpinOrbitProblem) -> Result<SpinOrbitNormalForm, SpinOrbitError> {
    p.check_frequency()?;
    let v = build_extended_field(p);
    let u0 = unperturbed_field(p);
    let variant = spin_orbit_variant();
    let result = newton_solve(&variant, &v, &Triple::initial(&variant, &u0), &p.newton)?;
    let x = &result.x;
    let realized = push_forward(&x.g, &x.u)?.add(&x.lambda.field(x.g.basis())).map_err(GeometryError::from)?;
    let forward_residual = realized.sub(&v).map_err(GeometryError::from)?.norm(0.0, 1.0);
    if !(forward_residual <= p.forward_tol) {
        return Err(SpinOrbitError::ForwardResidual { residual: forward_residual, tol: p.forward_tol });
    }
    Ok(SpinOrbitNormalForm { b: x.lambda.b[0], result, forward_residual })
}

/// `W(theta) = g(theta, 0)`: angle displacement and actions of the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusEmbedding {
    pub alpha: f64,
    pub phi1: FourierSeries,
    pub r0: Vec<FourierSeries>,
}

impl TorusEmbedding {
    /// `(theta_1 + phi1, t, alpha + R0_1)` in `(theta, t, theta')` coordinates,
    /// at torus coordinates `(psi, t)`.
    pub fn point(&self, psi: f64, t: f64) -> (f64, f64) {
        let th = [psi, t];
        (psi + self.phi1.eval(&th), self.alpha + self.r0[0].eval(&th))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttractorCurvePoint {
    pub eta: f64,
    pub epsilon: f64,
    pub nu_star: f64,
    /// `|b(nu*)|`.
    pub residual: f64,
    pub newton_iters: usize,
    pub certificate_exponent: Option<f64>,
    pub forward_residual: f64,
    /// Root-finder evaluations of `b`.
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus_embedding: Option<TorusEmbedding>,
}

fn embedding_of(alpha: f64, nf: &SpinOrbitNormalForm) -> TorusEmbedding {
    let g = &nf.result.x.g;
    TorusEmbedding { alpha, phi1: g.phi()[0].clone(), r0: g.r0().to_vec() }
}

const MAX_ROOT_STEPS: usize = 40;
const MAX_WIDENINGS: usize = 12;

/// Secant search for `nu*` with `b(nu*) = 0`, seeded at `nu = alpha` with slope `eta`
/// and safeguarded by the bracket `[alpha - 10 eps, alpha + 10 eps]`, widened
/// geometrically until it changes sign.
pub fn eliminate_nu(p: &SpinOrbitProblem) -> Result<AttractorCurvePoint, SpinOrbitError> {
    if !(p.eta.abs() >= p.min_eta) {
        return Err(SpinOrbitError::StructurallyExcluded { eta: p.eta, min: p.min_eta });
    }
    let mut evals = 0usize;
    let mut eval = |nu: f64| -> Result<SpinOrbitNormalForm, SpinOrbitError> {
        evals += 1;
        translated_torus_normal_form(&p.with_nu(nu))
    };
    let finish = |nu: f64, nf: SpinOrbitNormalForm, evals: usize| AttractorCurvePoint {
        eta: p.eta,
        epsilon: p.epsilon,
        nu_star: nu,
        residual: nf.b.abs(),
        newton_iters: nf.result.iterations(),
        certificate_exponent: nf.result.certificate.map(|c| c.exponent),
        forward_residual: nf.forward_residual,
        evaluations: evals,
        torus_embedding: Some(embedding_of(p.alpha, &nf)),
    };

    let nu0 = p.alpha;
    let nf0 = eval(nu0)?;
    let b0 = nf0.b;
    log::debug!("eta {}, eps {}: b(alpha) = {b0:.3e}", p.eta, p.epsilon);
    if b0.abs() <= p.root_tol {
        return Ok(finish(nu0, nf0, evals));
    }
    // first step along the slope eta
    let nu1 = nu0 - b0 / p.eta;
    let nf1 = eval(nu1)?;
    if nf1.b.abs() <= p.root_tol {
        return Ok(finish(nu1, nf1, evals));
    }

    let mut half = 10.0 * p.epsilon.max(1e-12);
    half = half.max(2.0 * (nu1 - nu0).abs());
    let (mut lo, mut hi) = (p.alpha - half, p.alpha + half);
    let (mut blo, mut bhi) = (eval(lo)?.b, eval(hi)?.b);
    let mut widen = 0;
    while blo.signum() == bhi.signum() {
        widen += 1;
        if widen > MAX_WIDENINGS {
            return Err(SpinOrbitError::RootBracketingFailure { lo, hi, b_lo: blo, b_hi: bhi });
        }
        half *= 2.0;
        lo = p.alpha - half;
        hi = p.alpha + half;
        blo = eval(lo)?.b;
        bhi = eval(hi)?.b;
    }

    let (mut xa, mut fa) = (nu0, b0);
    let (mut xb, mut fb) = (nu1, nf1.b);
    for _ in 0..MAX_ROOT_STEPS {
        let mut x = xb - fb * (xb - xa) / (fb - fa);
        if !(x > lo && x < hi) || !x.is_finite() {
            x = 0.5 * (lo + hi);
        }
        let nf = eval(x)?;
        let fx = nf.b;
        if fx.abs() <= p.root_tol {
            return Ok(finish(x, nf, evals));
        }
        if fx.signum() == blo.signum() {
            lo = x;
            blo = fx;
        } else {
            hi = x;
        }
        xa = xb;
        fa = fb;
        xb = x;
        fb = fx;
    }
    Err(SpinOrbitError::NoConvergence { iters: MAX_ROOT_STEPS, b: fb.abs() })
}
