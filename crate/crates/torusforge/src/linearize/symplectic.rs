use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{
    check_gate, check_shapes, finish, j01_scaled, least_squares, pin_origin, pulled_counter_term, CounterTerm,
    DeltaG, LinearizeError, LinearizeOptions, LinearizedSolution,
};
use crate::cohomology::{solve_tangent, CohomologyError, DIVISOR_FLOOR};
use crate::fourier::{FourierSeries, Jet01, SeriesMatrix, VectorFieldJet};
use crate::geometry::{pull_back, Conjugacy, GeometryError};

/// Frequency, dissipation and torsion `Q = u1` of a field with `A = -eta Id`.
struct HamModel {
    alpha: Vec<f64>,
    eta: f64,
    q: SeriesMatrix,
}

impl HamModel {
    fn new(u: &VectorFieldJet) -> Result<Self, LinearizeError> {
        let frame = u.frame.as_ref().ok_or(LinearizeError::MissingFrame)?;
        let n = u.n();
        if u.m() != n {
            return Err(LinearizeError::Shape { expected: n, got: u.m() });
        }
        let eta = -frame.a[0][0];
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { -eta } else { 0.0 };
                off = off.max((frame.a[i][j] - want).abs());
            }
        }
        if off > 1e-14 * eta.abs().max(1.0) {
            return Err(LinearizeError::ClassViolation { what: "normal matrix is not -eta Id".into(), size: off });
        }
        Ok(HamModel { alpha: frame.alpha.clone(), eta, q: u.u1() })
    }
}

#[derive(Clone)]
struct SymCore {
    phi: Vec<FourierSeries>,
    s: FourierSeries,
    xi: Vec<f64>,
    obs: Vec<f64>,
}

impl SymCore {
    fn axpy(&mut self, a: f64, o: &SymCore) {
        for (p, q) in self.phi.iter_mut().zip(&o.phi) {
            p.axpy(a, q);
        }
        self.s.axpy(a, &o.s);
        for (p, q) in self.xi.iter_mut().zip(&o.xi) {
            *p += a * q;
        }
        for (p, q) in self.obs.iter_mut().zip(&o.obs) {
            *p += a * q;
        }
    }

    fn delta_g(&self) -> Result<DeltaG, LinearizeError> {
        let n = self.phi.len();
        let mut r0 = Vec::with_capacity(n);
        for a in 0..n {
            let d = self.s.differentiate(a)?;
            r0.push(&d + &d.constant_like(self.xi[a]));
        }
        let mut r1 = vec![Vec::with_capacity(n); n];
        for (i, row) in r1.iter_mut().enumerate() {
            for j in 0..n {
                row.push(self.phi[j].differentiate(i)?.scale(-1.0));
            }
        }
        Ok(DeltaG { phi: self.phi.clone(), r0, r1, s: Some(self.s.clone()), xi: self.xi.clone() })
    }
}

/// Least-squares `S` with `(L_alpha + eta) dS = y` mode by mode (`k != 0`),
/// normalized by `S(0) = 0`.
fn solve_gradient(y: &[FourierSeries], alpha: &[f64], eta: f64) -> Result<FourierSeries, LinearizeError> {
    let basis = y[0].basis().clone();
    let mut s = y[0].zeros_like();
    let i = Complex64::new(0.0, 1.0);
    for idx in 1..basis.len() {
        let k = basis.mode(idx);
        let yk: Vec<Complex64> = y.iter().map(|f| f.coeffs()[idx]).collect();
        if yk.iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        let ka: f64 = k.iter().zip(alpha).map(|(&a, &b)| a as f64 * b).sum();
        let d = i * ka + eta;
        if d.norm() < DIVISOR_FLOOR {
            return Err(CohomologyError::SmallDivisor { k: k.to_vec(), divisor: d.norm() }.into());
        }
        let k2: f64 = k.iter().map(|&a| (a * a) as f64).sum();
        let proj: Complex64 = k.iter().zip(&yk).map(|(&a, z)| -i * a as f64 * z).sum();
        s.coeffs_mut()[idx] = proj / (k2 * d);
    }
    let mut v = vec![s];
    pin_origin(&mut v);
    Ok(v.pop().unwrap())
}

/// `(L + eta)(dS) + eta xi = n0` and `L phi - Q (dS + xi) = t0`, with the
/// averages `<n0> - eta xi` and `<t0 + Q (dS + xi)>` returned as obstructions.
fn sym_core(model: &HamModel, rhs: &Jet01, xi: &[f64]) -> Result<SymCore, LinearizeError> {
    let n = rhs.t0.len();
    let mut obs = Vec::with_capacity(2 * n);
    for a in 0..n {
        obs.push(rhs.n0[a].average() - model.eta * xi[a]);
    }
    let s = solve_gradient(&rhs.n0, &model.alpha, model.eta)?;
    let r0: Vec<FourierSeries> = (0..n)
        .map(|a| s.differentiate(a).map(|d| &d + &d.constant_like(xi[a])))
        .collect::<Result<_, _>>()?;
    let mut phi = Vec::with_capacity(n);
    for a in 0..n {
        let mut t = rhs.t0[a].clone();
        for j in 0..n {
            t += &model.q[a][j].multiply(&r0[j])?;
        }
        obs.push(t.average());
        t.set_average(0.0);
        phi.push(solve_tangent(&t, &model.alpha)?);
    }
    pin_origin(&mut phi);
    Ok(SymCore { phi, s, xi: xi.to_vec(), obs })
}

fn require_symplectic(g: &Conjugacy) -> Result<(), LinearizeError> {
    if g.generator().is_none() {
        return Err(GeometryError::NotSymplectic.into());
    }
    Ok(())
}

/// Herman step on a pulled-back residual.
pub(crate) fn herman_pulled(
    g: &Conjugacy,
    u: &VectorFieldJet,
    w: &VectorFieldJet,
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    check_shapes(g, u, w)?;
    require_symplectic(g)?;
    check_gate(g, opts)?;
    let model = HamModel::new(u)?;
    let n = u.n();
    let zero = vec![0.0; n];
    let mut base = sym_core(&model, &w.j01(), &zero)?;
    let mut cols = Vec::with_capacity(n);
    let mut sols = Vec::with_capacity(n);
    for a in 0..n {
        let mut e = CounterTerm::zero(n, n);
        e.beta[a] = 1.0;
        let ld = pulled_counter_term(g, &e)?;
        let c = sym_core(&model, &j01_scaled(&ld, -1.0), &zero)?;
        cols.push(c.obs.clone());
        sols.push(c);
    }
    let rhs: Vec<f64> = base.obs.iter().map(|x| -x).collect();
    let (x, sv) = least_squares(&cols, &rhs);
    let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_sv > 1e-8) {
        return Err(LinearizeError::NonInvertibleCounterTermSystem { min_sv });
    }
    for (c, &a) in sols.iter().zip(&x) {
        base.axpy(a, c);
    }
    let mut dl = CounterTerm::zero(n, n);
    dl.beta = x;
    let dg = base.delta_g()?;
    let lambda_dot = pull_back(g, &dl.field(g.basis()))?;
    let (du, residual, accepted) = finish(w, &lambda_dot, &dg, u, opts)?;
    if !accepted {
        return Err(LinearizeError::ClassViolation { what: "forward residual".into(), size: residual });
    }
    Ok(LinearizedSolution { delta_g: dg, delta_u: du, delta_lambda: dl, residual })
}

/// Linearized equation for exact symplectic `g` and `lambda = (beta, 0)`,
/// `u` Hamiltonian up to the dissipation `-eta r`.
pub fn solve_linearized_herman_dissipative(
    g: &Conjugacy,
    u: &VectorFieldJet,
    delta_v: &VectorFieldJet,
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    let w = pull_back(g, delta_v)?;
    herman_pulled(g, u, &w, opts)
}

/// Rüssmann step on a pulled-back residual. `free[a] = false` freezes angle
/// `a`: `phi_a = theta_a`, `xi_a = 0`, `b_a = 0`.
pub(crate) fn russmann_pulled(
    g: &Conjugacy,
    u: &VectorFieldJet,
    w: &VectorFieldJet,
    free: &[bool],
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    check_shapes(g, u, w)?;
    require_symplectic(g)?;
    check_gate(g, opts)?;
    let model = HamModel::new(u)?;
    let n = u.n();
    if free.len() != n {
        return Err(LinearizeError::Shape { expected: n, got: free.len() });
    }
    let idx: Vec<usize> = (0..n).filter(|&a| free[a]).collect();
    let nf = idx.len();
    let zero = vec![0.0; n];
    let jw = w.j01();
    let mut base = sym_core(&model, &jw, &zero)?;

    // unknowns: xi_a then b_a over the free angles
    let mut cols = Vec::with_capacity(2 * nf);
    let mut sols = Vec::with_capacity(2 * nf);
    for &a in &idx {
        let mut xi = zero.clone();
        xi[a] = 1.0;
        let c = sym_core(&model, &super::j01_zero(g.basis(), n, n), &xi)?;
        cols.push(c.obs.clone());
        sols.push(c);
    }
    for &a in &idx {
        let mut e = CounterTerm::zero(n, n);
        e.b[a] = 1.0;
        let ld = pulled_counter_term(g, &e)?;
        let c = sym_core(&model, &j01_scaled(&ld, -1.0), &zero)?;
        cols.push(c.obs.clone());
        sols.push(c);
    }
    torsion_gate(&model, &cols, &idx)?;
    let rhs: Vec<f64> = base.obs.iter().map(|x| -x).collect();
    let (x, sv) = least_squares(&cols, &rhs);
    let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if nf > 0 && !(min_sv > 1e-8) {
        return Err(LinearizeError::NonInvertibleCounterTermSystem { min_sv });
    }
    for (c, &a) in sols.iter().zip(&x) {
        base.axpy(a, c);
    }
    let scale = jw.norm().max(f64::MIN_POSITIVE);
    for a in 0..n {
        if !free[a] {
            let size = base.phi[a].l1();
            if size > (1e-8 * scale).max(1e-14) {
                return Err(LinearizeError::ClassViolation { what: format!("frozen angle {a} moves"), size });
            }
            base.phi[a] = base.phi[a].zeros_like();
        }
    }
    let mut dl = CounterTerm::zero(n, n);
    for (q, &a) in idx.iter().enumerate() {
        dl.b[a] = x[nf + q];
    }
    let dg = base.delta_g()?;
    let lambda_dot = pull_back(g, &dl.field(g.basis()))?;
    let (du, residual, accepted) = finish(w, &lambda_dot, &dg, u, opts)?;
    if !accepted {
        return Err(LinearizeError::ForwardResidual { residual, tol: opts.residual_tol });
    }
    Ok(LinearizedSolution { delta_g: dg, delta_u: du, delta_lambda: dl, residual })
}

/// Schur complement of the averaged system on the torsion block must keep
/// half the determinant of `<Q>` restricted to the free angles.
fn torsion_gate(model: &HamModel, cols: &[Vec<f64>], idx: &[usize]) -> Result<(), LinearizeError> {
    let nf = idx.len();
    if nf == 0 {
        return Ok(());
    }
    let n = model.q.len();
    // rows: normal averages (a) then tangent averages (b), free angles only
    let pick = |row: usize, col: usize| cols[col][row];
    let block = |rows: usize, c0: usize| DMatrix::from_fn(nf, nf, |i, j| pick(rows + idx[i], c0 + j));
    let j_axi = block(0, 0);
    let j_ab = block(0, nf);
    let j_bxi = block(n, 0);
    let j_bb = block(n, nf);
    let inv = j_ab.clone().try_inverse().ok_or(LinearizeError::NonInvertibleCounterTermSystem { min_sv: 0.0 })?;
    let reduced = j_bxi - j_bb * inv * j_axi;
    let qbar = DMatrix::from_fn(nf, nf, |i, j| model.q[idx[i]][idx[j]].average());
    let det = reduced.determinant().abs();
    let bound = 0.5 * qbar.determinant().abs();
    if !(det >= bound) || bound == 0.0 {
        return Err(LinearizeError::DegenerateTorsion { det, bound });
    }
    Ok(())
}

/// Linearized equation for symplectic `g` and `lambda = (0, b)`, `u` with
/// torsion `Q = u1` and dissipation `-eta r`.
pub fn solve_linearized_russmann(
    g: &Conjugacy,
    u: &VectorFieldJet,
    delta_v: &VectorFieldJet,
    free: &[bool],
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    let w = pull_back(g, delta_v)?;
    russmann_pulled(g, u, &w, free, opts)
}
