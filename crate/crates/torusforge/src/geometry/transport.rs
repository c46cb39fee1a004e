use super::conjugacy::{invert_conjugacy, Conjugacy, GridConj};
use super::linalg::inverse_small;
use super::GeometryError;
use crate::fourier::{eval_many_multi, monomial_count, FourierSeries, GridJet, RJet, VectorFieldJet};

/// `R0 + R1 r` as grid jets in the new actions.
fn action_map(gd: &GridConj, m: usize) -> Vec<GridJet> {
    (0..m)
        .map(|i| {
            let mut w = GridJet::constant(gd.r0[i].clone(), m);
            for j in 0..m {
                w.vals[1 + j] = gd.r1[i * m + j].clone();
            }
            w
        })
        .collect()
}

/// `h o g` for scalar jets, evaluated on the grid.
fn compose_grid(jets: &[&RJet], gd: &GridConj, w: &[GridJet]) -> (Vec<GridJet>, f64) {
    let mut series: Vec<&FourierSeries> = Vec::new();
    for j in jets {
        series.extend(j.coeffs().iter());
    }
    let vals = eval_many_multi(&series, &gd.points);
    let mut it = vals.into_iter();
    let mut dropped = 0.0;
    let out = jets
        .iter()
        .map(|j| {
            let gj = GridJet { m: j.m(), vals: it.by_ref().take(monomial_count(j.m())).collect() };
            let (s, d) = gj.substitute(w);
            dropped += d;
            s
        })
        .collect();
    (out, dropped)
}

/// Pull-back `g^* v = (g')^{-1} v o g` and the size of the dropped degree-3 terms.
pub fn pull_back_report(g: &Conjugacy, v: &VectorFieldJet) -> Result<(VectorFieldJet, f64), GeometryError> {
    let (n, m) = (g.n(), g.m());
    if v.n() != n || v.m() != m {
        return Err(GeometryError::Shape { expected: n + m, got: v.n() + v.m() });
    }
    let basis = g.basis().clone();
    let gd = g.grid_data()?;
    let len = gd.points.len();
    let w = action_map(&gd, m);
    let comps: Vec<&RJet> = v.components().collect();
    let (composed, mut dropped) = compose_grid(&comps, &gd, &w);
    let (vt, vn) = composed.split_at(n);

    let mut inv_phi = vec![vec![0.0; len]; n * n];
    let mut inv_r1 = vec![vec![0.0; len]; m * m];
    for p in 0..len {
        let ip = inverse_small(&gd.dphi[p], n).ok_or(GeometryError::SingularJacobian)?;
        for q in 0..n * n {
            inv_phi[q][p] = ip[q];
        }
        let r1: Vec<f64> = (0..m * m).map(|q| gd.r1[q][p]).collect();
        let ir = inverse_small(&r1, m).ok_or(GeometryError::SingularR1 { min_sv: 0.0 })?;
        for q in 0..m * m {
            inv_r1[q][p] = ir[q];
        }
    }

    let tangent: Vec<GridJet> = (0..n)
        .map(|a| {
            let mut t = GridJet::zero(len, m);
            for b in 0..n {
                t.add_mul_values(&inv_phi[a * n + b], &vt[b]);
            }
            t
        })
        .collect();
    let mut rhs: Vec<GridJet> = vn.to_vec();
    for (i, ri) in rhs.iter_mut().enumerate() {
        for (b, tb) in tangent.iter().enumerate() {
            let mut d = GridJet::constant(gd.dr0[i * n + b].clone(), m);
            for j in 0..m {
                d.vals[1 + j] = gd.dr1[(i * m + j) * n + b].clone();
            }
            let (prod, dd) = d.mul(tb);
            dropped += dd;
            ri.axpy(-1.0, &prod);
        }
    }
    let normal: Vec<GridJet> = (0..m)
        .map(|i| {
            let mut t = GridJet::zero(len, m);
            for k in 0..m {
                t.add_mul_values(&inv_r1[i * m + k], &rhs[k]);
            }
            t
        })
        .collect();
    Ok((
        VectorFieldJet {
            tangent: tangent.iter().map(|t| t.to_rjet(&basis)).collect(),
            normal: normal.iter().map(|t| t.to_rjet(&basis)).collect(),
            frame: None,
        },
        dropped,
    ))
}

pub fn pull_back(g: &Conjugacy, v: &VectorFieldJet) -> Result<VectorFieldJet, GeometryError> {
    pull_back_report(g, v).map(|(j, _)| j)
}

/// `g_* u = (g' u) o g^{-1}`, computed as the pull-back by `g^{-1}`.
pub fn push_forward(g: &Conjugacy, u: &VectorFieldJet) -> Result<VectorFieldJet, GeometryError> {
    let gi = invert_conjugacy(g)?;
    pull_back(&gi, u)
}

/// `|g^* v|_{s, rho}`.
pub fn deformed_norm(g: &Conjugacy, v: &VectorFieldJet, s: f64, rho: f64) -> Result<f64, GeometryError> {
    Ok(pull_back(g, v)?.norm(s, rho))
}

/// `Dh . f` for every component of `h`, truncated at degree 2.
fn directional(f: &VectorFieldJet, h: &VectorFieldJet) -> Result<(Vec<RJet>, f64), GeometryError> {
    let n = f.n();
    let mut dropped = 0.0;
    let mut out = Vec::with_capacity(n + h.m());
    for hc in h.components() {
        let mut acc = RJet::zero(hc.basis(), hc.m());
        for (b, ft) in f.tangent.iter().enumerate() {
            let (p, d) = hc.d_theta(b)?.mul(ft)?;
            dropped += d;
            acc = acc.add(&p)?;
        }
        for (j, fnj) in f.normal.iter().enumerate() {
            let (p, d) = hc.d_r(j).mul(fnj)?;
            dropped += d;
            acc = acc.add(&p)?;
        }
        out.push(acc);
    }
    Ok((out, dropped))
}

/// `[f, h] = Dh . f - Df . h`.
pub fn lie_bracket(f: &VectorFieldJet, h: &VectorFieldJet) -> Result<VectorFieldJet, GeometryError> {
    if f.n() != h.n() || f.m() != h.m() {
        return Err(GeometryError::Shape { expected: f.n() + f.m(), got: h.n() + h.m() });
    }
    let (a, _) = directional(f, h)?;
    let (b, _) = directional(h, f)?;
    let mut comps = a.iter().zip(&b).map(|(x, y)| x.sub(y)).collect::<Result<Vec<_>, _>>()?;
    let normal = comps.split_off(f.n());
    Ok(VectorFieldJet { tangent: comps, normal, frame: None })
}

/// `(d_r H, -d_theta H - eta (r - zeta))`.
pub fn hamiltonian_field(h: &RJet, eta: f64, zeta: &[f64]) -> Result<VectorFieldJet, GeometryError> {
    let n = h.basis().dim();
    if h.m() != n || zeta.len() != n {
        return Err(GeometryError::Shape { expected: n, got: h.m() });
    }
    let tangent = (0..n).map(|i| h.d_r(i)).collect();
    let normal = (0..n)
        .map(|i| {
            let mut c = h.d_theta(i)?.scale(-1.0);
            let z = c.const_term().clone();
            c.set_const(&z + &z.constant_like(eta * zeta[i]));
            let l = c.linear_term(i).clone();
            c.set_linear(i, &l - &l.constant_like(eta));
            Ok(c)
        })
        .collect::<Result<_, GeometryError>>()?;
    Ok(VectorFieldJet { tangent, normal, frame: None })
}

/// Transforms `(H, zeta)` so that the field of the result is the push-forward
/// of the field of `(H, zeta)` by a symplectic `g`:
/// `H o g^{-1} - eta S o psi - eta (zeta + xi) . (psi - id)` with `zeta + xi`.
pub fn push_forward_ham_dissipative(
    g: &Conjugacy,
    h: &RJet,
    eta: f64,
    zeta: &[f64],
) -> Result<(RJet, Vec<f64>), GeometryError> {
    let s = g.generator().ok_or(GeometryError::NotSymplectic)?;
    let n = g.n();
    let basis = g.basis().clone();
    let gi = invert_conjugacy(g)?;
    let gd = gi.grid_data()?;
    let w = action_map(&gd, n);
    let (mut out, _) = compose_grid(&[h], &gd, &w);
    let mut hh = out.pop().expect("one jet");
    let zeta_hat: Vec<f64> = zeta.iter().zip(g.xi()).map(|(z, x)| z + x).collect();
    let s_psi = s.eval_many(&gd.points);
    let psi_minus_id: Vec<Vec<f64>> = gi.phi().iter().map(|f| f.to_grid()).collect();
    for (p, c) in hh.vals[0].iter_mut().enumerate() {
        let mut shift = s_psi[p];
        for a in 0..n {
            shift += zeta_hat[a] * psi_minus_id[a][p];
        }
        *c -= eta * shift;
    }
    Ok((hh.to_rjet(&basis), zeta_hat))
}
