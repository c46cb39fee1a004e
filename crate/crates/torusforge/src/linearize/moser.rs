use nalgebra::DMatrix;

use super::{
    check_gate, check_shapes, finish, j01_scaled, least_squares, pin_origin, pulled_counter_term,
    CounterTerm, DeltaG, LinearizeError, LinearizeOptions, LinearizedSolution,
};
use crate::cohomology::{solve_tangent, NormalOperator};
use crate::fourier::{FourierSeries, Jet01, SeriesMatrix, VectorFieldJet};
use crate::geometry::{pull_back, Conjugacy};

/// Pieces of `u` the linear system needs.
struct Model {
    alpha: Vec<f64>,
    op: NormalOperator,
    u1: SeriesMatrix,
    /// `quad[i][j][k]`: coefficient of `r_k` in `d_{r_j} u_n,i`.
    quad: Vec<Vec<Vec<FourierSeries>>>,
}

impl Model {
    fn new(u: &VectorFieldJet) -> Result<Self, LinearizeError> {
        let frame = u.frame.as_ref().ok_or(LinearizeError::MissingFrame)?;
        let m = u.m();
        let minus_a: Vec<Vec<f64>> = frame.a.iter().map(|row| row.iter().map(|x| -x).collect()).collect();
        let op = NormalOperator::new(&frame.alpha, &minus_a)?;
        let quad = u
            .normal
            .iter()
            .map(|c| (0..m).map(|j| (0..m).map(|k| c.d_r(j).linear_term(k).clone()).collect()).collect())
            .collect();
        Ok(Model { alpha: frame.alpha.clone(), op, u1: u.u1(), quad })
    }
}

/// Solution of the triangular system for one right-hand side, with the
/// averages that had to be removed (the obstructions).
#[derive(Clone)]
struct Core {
    phi: Vec<FourierSeries>,
    r0: Vec<FourierSeries>,
    r1: SeriesMatrix,
    obs: Vec<f64>,
}

impl Core {
    fn axpy(&mut self, a: f64, o: &Core) {
        for (p, q) in self.phi.iter_mut().zip(&o.phi).chain(self.r0.iter_mut().zip(&o.r0)) {
            p.axpy(a, q);
        }
        for (rp, rq) in self.r1.iter_mut().zip(&o.r1) {
            for (p, q) in rp.iter_mut().zip(rq) {
                p.axpy(a, q);
            }
        }
        for (p, q) in self.obs.iter_mut().zip(&o.obs) {
            *p += a * q;
        }
    }
}

/// `L phi - u1 R0 = t0`, `L R0 - A R0 = n0`,
/// `L R1 - [A, R1] + R0' u1 - 2 U2(R0, .) = n1`, solved in that order after
/// projecting out the parts of the averages the operators cannot reach.
/// With `translated`, the whole average of `n0` is an obstruction and `R0`
/// keeps zero average.
fn core(model: &Model, rhs: &Jet01, translated: bool) -> Result<Core, LinearizeError> {
    let n = rhs.t0.len();
    let m = rhs.n0.len();
    let mut obs = Vec::with_capacity(m + n + m * m);

    let avg0: Vec<f64> = rhs.n0.iter().map(|f| f.average()).collect();
    let o0 = if translated { avg0 } else { model.op.kernel_part(&avg0) };
    let n0: Vec<FourierSeries> = rhs
        .n0
        .iter()
        .zip(&o0)
        .map(|(f, &o)| {
            let mut f = f.clone();
            f.set_average(f.average() - o);
            f
        })
        .collect();
    obs.extend(&o0);
    let r0 = model.op.solve_normal(&n0)?;

    let mut phi = Vec::with_capacity(n);
    for a in 0..n {
        let mut t = rhs.t0[a].clone();
        for j in 0..m {
            t += &model.u1[a][j].multiply(&r0[j])?;
        }
        obs.push(t.average());
        t.set_average(0.0);
        phi.push(solve_tangent(&t, &model.alpha)?);
    }
    pin_origin(&mut phi);

    let dr0: Vec<Vec<FourierSeries>> =
        r0.iter().map(|f| (0..n).map(|b| f.differentiate(b)).collect::<Result<_, _>>()).collect::<Result<_, _>>()?;
    let mut n1 = rhs.n1.clone();
    for i in 0..m {
        for j in 0..m {
            for b in 0..n {
                n1[i][j] -= &dr0[i][b].multiply(&model.u1[b][j])?;
            }
            for k in 0..m {
                n1[i][j] += &model.quad[i][k][j].multiply(&r0[k])?;
            }
        }
    }
    let avg1: Vec<Vec<f64>> = n1.iter().map(|row| row.iter().map(|f| f.average()).collect()).collect();
    let o2 = model.op.commutant_part(&avg1);
    for i in 0..m {
        for j in 0..m {
            n1[i][j].set_average(avg1[i][j] - o2[i][j]);
            obs.push(o2[i][j]);
        }
    }
    let r1 = model.op.solve_matrix(&n1)?;
    Ok(Core { phi, r0, r1, obs })
}

/// Real orthonormal basis of the range of a linear projection given by its
/// images of the unit vectors.
fn range_basis(images: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    if dim == 0 || images.is_empty() {
        return Vec::new();
    }
    let len = images[0].len();
    let mat = DMatrix::from_fn(len, images.len(), |i, k| images[k][i]);
    let svd = mat.svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    order.iter().take(dim).map(|&c| (0..len).map(|i| u[(i, c)]).collect()).collect()
}

/// Counter-term coordinates: `beta` free, `b` in `ker A` (everywhere when
/// `translated`), `B` in the commutant of `A`.
pub(crate) struct CounterBasis {
    pub elems: Vec<CounterTerm>,
}

impl CounterBasis {
    pub(crate) fn moser(op: &NormalOperator, n: usize, translated: bool) -> Self {
        let m = op.m();
        let mut elems = Vec::new();
        for a in 0..n {
            let mut c = CounterTerm::zero(n, m);
            c.beta[a] = 1.0;
            elems.push(c);
        }
        let kimg: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                if translated {
                    e
                } else {
                    op.kernel_part(&e)
                }
            })
            .collect();
        let kdim = if translated { m } else { op.kernel_dim() };
        for v in range_basis(&kimg, kdim) {
            let mut c = CounterTerm::zero(n, m);
            c.b = v;
            elems.push(c);
        }
        let cimg: Vec<Vec<f64>> = (0..m * m)
            .map(|q| {
                let mut e = vec![vec![0.0; m]; m];
                e[q / m][q % m] = 1.0;
                op.commutant_part(&e).into_iter().flatten().collect()
            })
            .collect();
        for v in range_basis(&cimg, op.commutant_dim()) {
            let mut c = CounterTerm::zero(n, m);
            c.bmat = v.chunks(m).map(|r| r.to_vec()).collect();
            elems.push(c);
        }
        CounterBasis { elems }
    }

    pub(crate) fn combine(&self, x: &[f64]) -> CounterTerm {
        let (n, m) = (self.elems[0].n(), self.elems[0].m());
        let mut out = CounterTerm::zero(n, m);
        for (c, &a) in self.elems.iter().zip(x) {
            let mut s = c.clone();
            s.beta.iter_mut().chain(s.b.iter_mut()).chain(s.bmat.iter_mut().flatten()).for_each(|v| *v *= a);
            out = out.add(&s);
        }
        out
    }
}

/// Moser step on an already pulled-back residual `w = g^*(v - lambda) - u`.
/// `translated` trades the average of `R0_dot` for a full `b` in `R^m`.
pub(crate) fn moser_pulled(
    g: &Conjugacy,
    u: &VectorFieldJet,
    w: &VectorFieldJet,
    translated: bool,
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    check_shapes(g, u, w)?;
    check_gate(g, opts)?;
    let model = Model::new(u)?;
    let n = u.n();
    let basis = CounterBasis::moser(&model.op, n, translated);

    let mut base = core(&model, &w.j01(), translated)?;
    let mut cols = Vec::with_capacity(basis.elems.len());
    let mut sols = Vec::with_capacity(basis.elems.len());
    for e in &basis.elems {
        let ld = pulled_counter_term(g, e)?;
        let c = core(&model, &j01_scaled(&ld, -1.0), translated)?;
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
    let dl = basis.combine(&x);
    let dg = DeltaG { phi: base.phi, r0: base.r0, r1: base.r1, s: None, xi: Vec::new() };
    let lambda_dot = pull_back(g, &dl.field(g.basis()))?;
    let (du, residual, accepted) = finish(w, &lambda_dot, &dg, u, opts)?;
    if !accepted {
        return Err(LinearizeError::ForwardResidual { residual, tol: opts.residual_tol });
    }
    Ok(LinearizedSolution { delta_g: dg, delta_u: du, delta_lambda: dl, residual })
}

/// Solve the linearized conjugacy equation at `(g, u, lambda)` for a field
/// increment `delta_v` given in the original coordinates.
pub fn solve_linearized_moser(
    g: &Conjugacy,
    u: &VectorFieldJet,
    _lambda: &CounterTerm,
    delta_v: &VectorFieldJet,
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    let w = pull_back(g, delta_v)?;
    moser_pulled(g, u, &w, false, opts)
}

/// Same as [`solve_linearized_moser`] with `R0_dot` of zero average and the
/// full translation `b` in `R^m` as counter-term.
pub fn solve_linearized_moser_translated(
    g: &Conjugacy,
    u: &VectorFieldJet,
    delta_v: &VectorFieldJet,
    opts: &LinearizeOptions,
) -> Result<LinearizedSolution, LinearizeError> {
    let w = pull_back(g, delta_v)?;
    moser_pulled(g, u, &w, true, opts)
}
