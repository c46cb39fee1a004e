use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::linalg::{inverse_small, min_singular_value};
use super::GeometryError;
use crate::fourier::{eval_many_multi, shifted_grid_points, Basis, FourierSeries, SeriesMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    General,
    /// `(phi, t(phi')^{-1} (r + dS))`.
    ExactSymplectic,
    /// `(phi, t(phi')^{-1} (r + dS + xi))`.
    Symplectic,
}

/// `g(theta, r) = (theta + v(theta), R0(theta) + R1(theta) r)` with `v(0) = 0`.
///
/// Symplectic flavors keep their generator `S` and translation `xi`; `R0`
/// and `R1` are then derived from `(phi, S, xi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conjugacy {
    phi: Vec<FourierSeries>,
    r0: Vec<FourierSeries>,
    r1: SeriesMatrix,
    flavor: Flavor,
    s: Option<FourierSeries>,
    xi: Vec<f64>,
}

/// Values of a conjugacy and its angle derivatives on the basis grid.
pub(crate) struct GridConj {
    /// Moved grid points `theta_p + v(theta_p)`.
    pub points: Vec<Vec<f64>>,
    /// `phi'` row-major per point.
    pub dphi: Vec<Vec<f64>>,
    pub r0: Vec<Vec<f64>>,
    /// `r1[i * m + j]`, one value vector each.
    pub r1: Vec<Vec<f64>>,
    /// `dr0[i * n + b] = d_b R0_i`.
    pub dr0: Vec<Vec<f64>>,
    /// `dr1[(i * m + j) * n + b] = d_b R1_ij`.
    pub dr1: Vec<Vec<f64>>,
}

const ORIGIN_TOL: f64 = 1e-12;

fn check_origin(phi: &[FourierSeries]) -> Result<(), GeometryError> {
    let zero = vec![0.0; phi.len()];
    for v in phi {
        let x = v.eval(&zero);
        if x.abs() > ORIGIN_TOL * v.l1().max(1.0) {
            return Err(GeometryError::OriginNotFixed { value: x });
        }
    }
    Ok(())
}

/// Shift averages so that `v(0) = 0` exactly; undoes truncation drift.
fn pin_origin(phi: &mut [FourierSeries]) {
    let zero = vec![0.0; phi.len()];
    for v in phi.iter_mut() {
        let x = v.eval(&zero);
        v.set_average(v.average() - x);
    }
}

fn series_grid(fs: &[&FourierSeries]) -> Vec<Vec<f64>> {
    fs.iter().map(|f| f.to_grid()).collect()
}

/// Values of `phi' = I + Dv` on the grid, row-major per point.
fn dphi_grid(phi: &[FourierSeries]) -> Result<Vec<Vec<f64>>, GeometryError> {
    let n = phi.len();
    let len = phi[0].basis().grid().len();
    let mut d = vec![vec![0.0; n * n]; len];
    for a in 0..n {
        for b in 0..n {
            let g = phi[a].differentiate(b)?.to_grid();
            for p in 0..len {
                d[p][a * n + b] = g[p] + if a == b { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(d)
}

impl Conjugacy {
    pub fn identity(basis: &Arc<Basis>, m: usize) -> Self {
        let n = basis.dim();
        let z = FourierSeries::zeros_on(basis.clone());
        let r1 = (0..m).map(|i| (0..m).map(|j| z.constant_like(if i == j { 1.0 } else { 0.0 })).collect()).collect();
        Conjugacy { phi: vec![z.clone(); n], r0: vec![z; m], r1, flavor: Flavor::General, s: None, xi: Vec::new() }
    }

    /// Identity in a symplectic flavor (`m = n`).
    pub fn identity_symplectic(basis: &Arc<Basis>, exact: bool) -> Self {
        let n = basis.dim();
        let z = FourierSeries::zeros_on(basis.clone());
        let mut g = Conjugacy::identity(basis, n);
        g.flavor = if exact { Flavor::ExactSymplectic } else { Flavor::Symplectic };
        g.s = Some(z);
        g.xi = vec![0.0; n];
        g
    }

    pub fn general(phi: Vec<FourierSeries>, r0: Vec<FourierSeries>, r1: SeriesMatrix) -> Result<Self, GeometryError> {
        let m = r0.len();
        if r1.len() != m || r1.iter().any(|row| row.len() != m) {
            return Err(GeometryError::Shape { expected: m, got: r1.len() });
        }
        if phi.is_empty() {
            return Err(GeometryError::Shape { expected: 1, got: 0 });
        }
        check_origin(&phi)?;
        Ok(Conjugacy { phi, r0, r1, flavor: Flavor::General, s: None, xi: Vec::new() })
    }

    /// `(phi, t(phi')^{-1} (r + dS + xi))`.
    pub fn symplectic(phi: Vec<FourierSeries>, s: FourierSeries, xi: Vec<f64>) -> Result<Self, GeometryError> {
        let n = phi.len();
        if xi.len() != n {
            return Err(GeometryError::Shape { expected: n, got: xi.len() });
        }
        check_origin(&phi)?;
        let basis = phi[0].basis().clone();
        let dphi = dphi_grid(&phi)?;
        let ds: Vec<Vec<f64>> = (0..n).map(|b| s.differentiate(b).map(|d| d.to_grid())).collect::<Result<_, _>>()?;
        let len = dphi.len();
        let mut r0v = vec![vec![0.0; len]; n];
        let mut r1v = vec![vec![0.0; len]; n * n];
        for p in 0..len {
            let inv = inverse_small(&dphi[p], n).ok_or(GeometryError::SingularJacobian)?;
            // t(phi')^{-1}[i][j] = inv[j][i]
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    let t = inv[j * n + i];
                    r1v[i * n + j][p] = t;
                    acc += t * (ds[j][p] + xi[j]);
                }
                r0v[i][p] = acc;
            }
        }
        let r0 = r0v.iter().map(|v| FourierSeries::from_grid(&basis, v)).collect();
        let r1 = (0..n).map(|i| (0..n).map(|j| FourierSeries::from_grid(&basis, &r1v[i * n + j])).collect()).collect();
        let exact = xi.iter().all(|&x| x == 0.0);
        Ok(Conjugacy {
            phi,
            r0,
            r1,
            flavor: if exact { Flavor::ExactSymplectic } else { Flavor::Symplectic },
            s: Some(s),
            xi,
        })
    }

    pub fn exact_symplectic(phi: Vec<FourierSeries>, s: FourierSeries) -> Result<Self, GeometryError> {
        let n = phi.len();
        Self::symplectic(phi, s, vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn m(&self) -> usize {
        self.r0.len()
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.phi[0].basis()
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// `phi - id`.
    pub fn phi(&self) -> &[FourierSeries] {
        &self.phi
    }

    pub fn r0(&self) -> &[FourierSeries] {
        &self.r0
    }

    pub fn r1(&self) -> &SeriesMatrix {
        &self.r1
    }

    /// Generator `S` of a symplectic conjugacy.
    pub fn generator(&self) -> Option<&FourierSeries> {
        self.s.as_ref()
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn is_symplectic(&self) -> bool {
        self.flavor != Flavor::General
    }

    /// Largest coefficient l1 distance of `(v, R0, R1 - I)` from zero.
    pub fn distance_from_identity(&self) -> f64 {
        let mut d: f64 = 0.0;
        for f in self.phi.iter().chain(&self.r0) {
            d = d.max(f.l1());
        }
        for (i, row) in self.r1.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                let id = if i == j { 1.0 } else { 0.0 };
                d = d.max((f - &f.constant_like(id)).l1());
            }
        }
        d
    }

    /// `g(theta, r)` with the angle on the universal cover.
    pub fn eval(&self, theta: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let big: Vec<f64> = theta.iter().zip(&self.phi).map(|(t, v)| t + v.eval(theta)).collect();
        let m = self.m();
        let rr = (0..m)
            .map(|i| self.r0[i].eval(theta) + (0..m).map(|j| self.r1[i][j].eval(theta) * r[j]).sum::<f64>())
            .collect();
        (big, rr)
    }

    /// Jacobian `g'(theta, r)`, row-major of size `(n + m)^2`.
    pub fn jacobian(&self, theta: &[f64], r: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n(), self.m());
        let d = n + m;
        let mut jac = vec![0.0; d * d];
        for a in 0..n {
            let (_, gr) = self.phi[a].eval_grad(theta);
            for b in 0..n {
                jac[a * d + b] = gr[b] + if a == b { 1.0 } else { 0.0 };
            }
        }
        for i in 0..m {
            let (_, g0) = self.r0[i].eval_grad(theta);
            let mut row = g0;
            for j in 0..m {
                let (val, gj) = self.r1[i][j].eval_grad(theta);
                for b in 0..n {
                    row[b] += gj[b] * r[j];
                }
                jac[(n + i) * d + n + j] = val;
            }
            for b in 0..n {
                jac[(n + i) * d + b] = row[b];
            }
        }
        jac
    }

    pub(crate) fn grid_data(&self) -> Result<GridConj, GeometryError> {
        let (n, m) = (self.n(), self.m());
        let basis = self.basis().clone();
        let points = shifted_grid_points(&basis, &self.phi);
        let dphi = dphi_grid(&self.phi)?;
        let r0 = series_grid(&self.r0.iter().collect::<Vec<_>>());
        let r1 = series_grid(&self.r1.iter().flatten().collect::<Vec<_>>());
        let mut dr0 = Vec::with_capacity(m * n);
        for f in &self.r0 {
            for b in 0..n {
                dr0.push(f.differentiate(b)?.to_grid());
            }
        }
        let mut dr1 = Vec::with_capacity(m * m * n);
        for f in self.r1.iter().flatten() {
            for b in 0..n {
                dr1.push(f.differentiate(b)?.to_grid());
            }
        }
        Ok(GridConj { points, dphi, r0, r1, dr0, dr1 })
    }

    /// `self o inner`, flattened to a general conjugacy.
    pub fn compose(&self, inner: &Conjugacy) -> Result<Conjugacy, GeometryError> {
        let (n, m) = (self.n(), self.m());
        if inner.n() != n || inner.m() != m {
            return Err(GeometryError::Shape { expected: m, got: inner.m() });
        }
        let basis = self.basis().clone();
        let gi = inner.grid_data()?;
        let mut outer_series: Vec<&FourierSeries> = self.phi.iter().collect();
        outer_series.extend(self.r0.iter());
        outer_series.extend(self.r1.iter().flatten());
        let vals = eval_many_multi(&outer_series, &gi.points);
        let len = gi.points.len();
        let innerv = series_grid(&inner.phi.iter().collect::<Vec<_>>());
        let mut phi: Vec<FourierSeries> = (0..n)
            .map(|a| {
                let v: Vec<f64> = (0..len).map(|p| innerv[a][p] + vals[a][p]).collect();
                FourierSeries::from_grid(&basis, &v)
            })
            .collect();
        pin_origin(&mut phi);
        let r1o = |i: usize, j: usize| &vals[n + m + i * m + j];
        let r0 = (0..m)
            .map(|i| {
                let v: Vec<f64> = (0..len)
                    .map(|p| vals[n + i][p] + (0..m).map(|k| r1o(i, k)[p] * gi.r0[k][p]).sum::<f64>())
                    .collect();
                FourierSeries::from_grid(&basis, &v)
            })
            .collect();
        let r1 = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let v: Vec<f64> =
                            (0..len).map(|p| (0..m).map(|k| r1o(i, k)[p] * gi.r1[k * m + j][p]).sum()).collect();
                        FourierSeries::from_grid(&basis, &v)
                    })
                    .collect()
            })
            .collect();
        Conjugacy::general(phi, r0, r1)
    }
}

/// Grid points `psi(y_p)` with `phi o psi = id`, and the Lipschitz bound of `v`.
pub fn invert_torus_map_grid(v: &[FourierSeries]) -> Result<(Vec<Vec<f64>>, f64), GeometryError> {
    let n = v.len();
    let mut lip: f64 = 0.0;
    for va in v {
        let mut row = 0.0;
        for b in 0..n {
            row += va.differentiate(b)?.l1();
        }
        lip = lip.max(row);
    }
    if lip >= 1.0 {
        return Err(GeometryError::ContractionFailure { lip });
    }
    let grid = v[0].basis().grid().clone();
    let solve = |p: usize| -> Option<Vec<f64>> {
        let y = grid.point(p);
        let mut x: Vec<f64> = y.iter().zip(v).map(|(yy, va)| yy - va.eval(&y)).collect();
        for _ in 0..60 {
            let mut f = vec![0.0; n];
            let mut jac = vec![0.0; n * n];
            for a in 0..n {
                let (val, gr) = v[a].eval_grad(&x);
                f[a] = x[a] + val - y[a];
                for b in 0..n {
                    jac[a * n + b] = gr[b] + if a == b { 1.0 } else { 0.0 };
                }
            }
            let err = f.iter().fold(0.0f64, |s, z| s.max(z.abs()));
            if err <= 1e-15 {
                return Some(x);
            }
            let inv = inverse_small(&jac, n)?;
            for a in 0..n {
                x[a] -= (0..n).map(|b| inv[a * n + b] * f[b]).sum::<f64>();
            }
        }
        let err = (0..n).map(|a| (x[a] + v[a].eval(&x) - y[a]).abs()).fold(0.0, f64::max);
        if err <= 1e-13 {
            Some(x)
        } else {
            None
        }
    };
    let pts: Option<Vec<Vec<f64>>> = (0..grid.len()).into_par_iter().map(solve).collect();
    pts.map(|p| (p, lip)).ok_or(GeometryError::ContractionFailure { lip })
}

/// `psi - id` where `psi` inverts `id + v`.
pub fn invert_torus_map(v: &[FourierSeries]) -> Result<Vec<FourierSeries>, GeometryError> {
    let basis = v[0].basis().clone();
    let (pts, _) = invert_torus_map_grid(v)?;
    let grid = basis.grid();
    Ok((0..v.len())
        .map(|a| {
            let w: Vec<f64> = (0..grid.len()).map(|p| pts[p][a] - grid.point(p)[a]).collect();
            FourierSeries::from_grid(&basis, &w)
        })
        .collect())
}

/// `g^{-1}(Theta, R) = (psi(Theta), R1^{-1}(psi) (R - R0(psi)))`.
pub fn invert_conjugacy(g: &Conjugacy) -> Result<Conjugacy, GeometryError> {
    let (n, m) = (g.n(), g.m());
    let basis = g.basis().clone();
    let grid = basis.grid();
    let (pts, _) = invert_torus_map_grid(&g.phi)?;
    let len = pts.len();
    let mut series: Vec<&FourierSeries> = g.r0.iter().collect();
    series.extend(g.r1.iter().flatten());
    let vals = eval_many_multi(&series, &pts);
    let mut min_sv = f64::INFINITY;
    let mut r0v = vec![vec![0.0; len]; m];
    let mut r1v = vec![vec![0.0; len]; m * m];
    for p in 0..len {
        let mat: Vec<f64> = (0..m * m).map(|q| vals[m + q][p]).collect();
        min_sv = min_sv.min(min_singular_value(&mat, m));
        let inv = inverse_small(&mat, m).ok_or(GeometryError::SingularR1 { min_sv: 0.0 })?;
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                r1v[i * m + j][p] = inv[i * m + j];
                acc -= inv[i * m + j] * vals[j][p];
            }
            r0v[i][p] = acc;
        }
    }
    if min_sv <= 1e-8 {
        return Err(GeometryError::SingularR1 { min_sv });
    }
    let mut phi: Vec<FourierSeries> = (0..n)
        .map(|a| {
            let w: Vec<f64> = (0..len).map(|p| pts[p][a] - grid.point(p)[a]).collect();
            FourierSeries::from_grid(&basis, &w)
        })
        .collect();
    pin_origin(&mut phi);
    let r0 = r0v.iter().map(|v| FourierSeries::from_grid(&basis, v)).collect();
    let r1 = (0..m).map(|i| (0..m).map(|j| FourierSeries::from_grid(&basis, &r1v[i * m + j])).collect()).collect();
    Conjugacy::general(phi, r0, r1)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConjugacyRepr {
    flavor: Flavor,
    phi_minus_id: Vec<FourierSeries>,
    #[serde(rename = "R0", default, skip_serializing_if = "Option::is_none")]
    r0: Option<Vec<FourierSeries>>,
    #[serde(rename = "R1", default, skip_serializing_if = "Option::is_none")]
    r1: Option<SeriesMatrix>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    s: Option<FourierSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xi: Option<Vec<f64>>,
}

impl Serialize for Conjugacy {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let repr = match self.flavor {
            Flavor::General => ConjugacyRepr {
                flavor: self.flavor,
                phi_minus_id: self.phi.clone(),
                r0: Some(self.r0.clone()),
                r1: Some(self.r1.clone()),
                s: None,
                xi: None,
            },
            _ => ConjugacyRepr {
                flavor: self.flavor,
                phi_minus_id: self.phi.clone(),
                r0: None,
                r1: None,
                s: self.s.clone(),
                xi: Some(self.xi.clone()),
            },
        };
        repr.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Conjugacy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = ConjugacyRepr::deserialize(d)?;
        match r.flavor {
            Flavor::General => {
                let r0 = r.r0.ok_or_else(|| D::Error::missing_field("R0"))?;
                let r1 = r.r1.ok_or_else(|| D::Error::missing_field("R1"))?;
                Conjugacy::general(r.phi_minus_id, r0, r1).map_err(D::Error::custom)
            }
            fl => {
                let s = r.s.ok_or_else(|| D::Error::missing_field("S"))?;
                let n = r.phi_minus_id.len();
                let xi = r.xi.unwrap_or_else(|| vec![0.0; n]);
                if fl == Flavor::ExactSymplectic && xi.iter().any(|&x| x != 0.0) {
                    return Err(D::Error::custom("exact_symplectic conjugacy must have xi = 0"));
                }
                let mut g = Conjugacy::symplectic(r.phi_minus_id, s, xi).map_err(D::Error::custom)?;
                g.flavor = fl;
                Ok(g)
            }
        }
    }
}
