use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::Basis;
use super::series::FourierSeries;
use super::FourierError;

/// Number of monomials of degree <= 2 in `m` variables.
pub fn monomial_count(m: usize) -> usize {
    1 + m + m * (m + 1) / 2
}

/// Index of `r_i r_j` in the monomial list (order of `i`, `j` irrelevant).
pub fn pair_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    1 + m + i * (2 * m - i + 1) / 2 + (j - i)
}

/// Degree and exponent pair of monomial `idx`: `(0, _)`, `(1, (i, i))` or `(2, (i, j))`.
pub fn monomial(m: usize, idx: usize) -> (usize, (usize, usize)) {
    if idx == 0 {
        return (0, (0, 0));
    }
    if idx <= m {
        return (1, (idx - 1, idx - 1));
    }
    let mut k = 1 + m;
    for i in 0..m {
        for j in i..m {
            if k == idx {
                return (2, (i, j));
            }
            k += 1;
        }
    }
    panic!("monomial index {idx} out of range for m = {m}");
}

/// Polynomial of degree <= 2 in `r in R^m` with Fourier-series coefficients.
///
/// Monomial order: `1`, `r_0 .. r_{m-1}`, then `r_i r_j` for `i <= j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RJet {
    m: usize,
    coeffs: Vec<FourierSeries>,
}

impl RJet {
    pub fn zero(basis: &Arc<Basis>, m: usize) -> Self {
        RJet { m, coeffs: vec![FourierSeries::zeros_on(basis.clone()); monomial_count(m)] }
    }

    pub fn constant(f: FourierSeries, m: usize) -> Self {
        let mut j = RJet::zero(f.basis(), m);
        j.coeffs[0] = f;
        j
    }

    pub fn from_coeffs(m: usize, coeffs: Vec<FourierSeries>) -> Result<Self, FourierError> {
        if coeffs.len() != monomial_count(m) {
            return Err(FourierError::JetShape { expected: monomial_count(m), got: coeffs.len() });
        }
        for c in &coeffs[1..] {
            if !c.same_basis(&coeffs[0]) {
                return Err(FourierError::OrderMismatch { left: coeffs[0].order(), right: c.order() });
            }
        }
        Ok(RJet { m, coeffs })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.coeffs[0].basis()
    }

    pub fn coeffs(&self) -> &[FourierSeries] {
        &self.coeffs
    }

    pub fn coeff(&self, idx: usize) -> &FourierSeries {
        &self.coeffs[idx]
    }

    pub fn coeff_mut(&mut self, idx: usize) -> &mut FourierSeries {
        &mut self.coeffs[idx]
    }

    pub fn const_term(&self) -> &FourierSeries {
        &self.coeffs[0]
    }

    pub fn linear_term(&self, i: usize) -> &FourierSeries {
        &self.coeffs[1 + i]
    }

    /// Coefficient of the monomial `r_i r_j`.
    pub fn quad_term(&self, i: usize, j: usize) -> &FourierSeries {
        &self.coeffs[pair_index(self.m, i, j)]
    }

    pub fn set_const(&mut self, f: FourierSeries) {
        self.coeffs[0] = f;
    }

    pub fn set_linear(&mut self, i: usize, f: FourierSeries) {
        self.coeffs[1 + i] = f;
    }

    pub fn set_quad(&mut self, i: usize, j: usize, f: FourierSeries) {
        let k = pair_index(self.m, i, j);
        self.coeffs[k] = f;
    }

    fn check(&self, other: &Self) -> Result<(), FourierError> {
        if self.m != other.m {
            return Err(FourierError::JetMismatch { left: self.m, right: other.m });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, FourierError> {
        self.check(other)?;
        Ok(RJet { m: self.m, coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FourierError> {
        self.check(other)?;
        Ok(RJet { m: self.m, coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() })
    }

    pub fn scale(&self, a: f64) -> Self {
        RJet { m: self.m, coeffs: self.coeffs.iter().map(|c| c.scale(a)).collect() }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.m, x.m, "jet variable counts differ");
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            c.axpy(a, d);
        }
    }

    /// Multiply every coefficient by a series.
    pub fn mul_series(&self, f: &FourierSeries) -> Self {
        let g = GridJet::from_rjet(self);
        g.mul_values(&f.to_grid()).to_rjet(self.basis())
    }

    /// Product truncated at degree 2; returns the sup-norm estimate of what was dropped.
    pub fn mul(&self, other: &Self) -> Result<(Self, f64), FourierError> {
        self.check(other)?;
        let (p, dropped) = GridJet::from_rjet(self).mul(&GridJet::from_rjet(other));
        Ok((p.to_rjet(self.basis()), dropped))
    }

    /// Partial derivative in the angle `axis`.
    pub fn d_theta(&self, axis: usize) -> Result<Self, FourierError> {
        let coeffs = self.coeffs.iter().map(|c| c.differentiate(axis)).collect::<Result<_, _>>()?;
        Ok(RJet { m: self.m, coeffs })
    }

    /// Lie derivative `L_alpha` of every coefficient.
    pub fn lie_derivative(&self, alpha: &[f64]) -> Self {
        RJet { m: self.m, coeffs: self.coeffs.iter().map(|c| c.lie_derivative(alpha)).collect() }
    }

    /// Partial derivative in the action `r_i`.
    pub fn d_r(&self, i: usize) -> Self {
        let mut out = RJet::zero(self.basis(), self.m);
        out.coeffs[0] = self.coeffs[1 + i].clone();
        for j in 0..self.m {
            let c = self.quad_term(i, j);
            let f = if i == j { c.scale(2.0) } else { c.clone() };
            out.coeffs[1 + j] = f;
        }
        out
    }

    /// Keep only the homogeneous part of degree `d`.
    pub fn degree_part(&self, d: usize) -> Self {
        let mut out = RJet::zero(self.basis(), self.m);
        for idx in 0..self.coeffs.len() {
            if monomial(self.m, idx).0 == d {
                out.coeffs[idx] = self.coeffs[idx].clone();
            }
        }
        out
    }

    /// Drop every term of degree `<= d`.
    pub fn above_degree(&self, d: usize) -> Self {
        let mut out = self.clone();
        for idx in 0..self.coeffs.len() {
            if monomial(self.m, idx).0 <= d {
                out.coeffs[idx] = self.coeffs[idx].zeros_like();
            }
        }
        out
    }

    pub fn eval(&self, theta: &[f64], r: &[f64]) -> f64 {
        assert_eq!(r.len(), self.m, "action vector has wrong length");
        let mut acc = 0.0;
        for (idx, c) in self.coeffs.iter().enumerate() {
            let w = monomial_value(self.m, idx, r);
            if w != 0.0 {
                acc += w * c.eval(theta);
            }
        }
        acc
    }

    /// The series `theta -> J(theta, r)` at a fixed action.
    pub fn eval_r(&self, r: &[f64]) -> FourierSeries {
        let mut out = self.coeffs[0].zeros_like();
        for (idx, c) in self.coeffs.iter().enumerate() {
            out.axpy(monomial_value(self.m, idx, r), c);
        }
        out
    }

    /// `sum_a |c_a|_s rho^{|a|}`.
    pub fn weighted_norm(&self, s: f64, rho: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| c.weighted_norm(s) * rho.powi(monomial(self.m, idx).0 as i32))
            .sum()
    }

    pub fn tail_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.tail_norm()).sum()
    }

    /// Composition `J(theta, w(theta, r))` with each `w_i` a jet in new actions
    /// (`w.len() == self.m()`); degree > 2 terms are dropped and their norm returned.
    pub fn substitute(&self, w: &[RJet]) -> Result<(Self, f64), FourierError> {
        if w.len() != self.m {
            return Err(FourierError::JetMismatch { left: self.m, right: w.len() });
        }
        let wg: Vec<GridJet> = w.iter().map(GridJet::from_rjet).collect();
        let (g, dropped) = GridJet::from_rjet(self).substitute(&wg);
        Ok((g.to_rjet(self.basis()), dropped))
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.max_diff(b)).fold(0.0, f64::max)
    }
}

pub(crate) fn monomial_value(m: usize, idx: usize, r: &[f64]) -> f64 {
    match monomial(m, idx) {
        (0, _) => 1.0,
        (1, (i, _)) => r[i],
        (_, (i, j)) => r[i] * r[j],
    }
}

/// Degree <= 2 polynomial in `r` whose coefficients are grid values; used for
/// pointwise algebra that is projected back to series once at the end.
#[derive(Clone, Debug)]
pub(crate) struct GridJet {
    pub m: usize,
    pub vals: Vec<Vec<f64>>,
}

impl GridJet {
    pub fn zero(len: usize, m: usize) -> Self {
        GridJet { m, vals: vec![vec![0.0; len]; monomial_count(m)] }
    }

    pub fn len(&self) -> usize {
        self.vals[0].len()
    }

    pub fn constant(vals: Vec<f64>, m: usize) -> Self {
        let mut g = GridJet::zero(vals.len(), m);
        g.vals[0] = vals;
        g
    }

    pub fn from_rjet(j: &RJet) -> Self {
        GridJet { m: j.m, vals: j.coeffs.iter().map(|c| c.to_grid()).collect() }
    }

    pub fn to_rjet(&self, basis: &Arc<Basis>) -> RJet {
        RJet { m: self.m, coeffs: self.vals.iter().map(|v| FourierSeries::from_grid(basis, v)).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        GridJet {
            m: self.m,
            vals: self.vals.iter().zip(&o.vals).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, o: &Self) {
        for (x, y) in self.vals.iter_mut().zip(&o.vals) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += a * q;
            }
        }
    }

    pub fn mul_values(&self, f: &[f64]) -> Self {
        GridJet { m: self.m, vals: self.vals.iter().map(|a| a.iter().zip(f).map(|(x, y)| x * y).collect()).collect() }
    }

    pub fn add_mul_values(&mut self, f: &[f64], o: &Self) {
        for (x, y) in self.vals.iter_mut().zip(&o.vals) {
            for ((p, q), w) in x.iter_mut().zip(y).zip(f) {
                *p += w * q;
            }
        }
    }

    pub fn mul(&self, o: &Self) -> (Self, f64) {
        let m = self.m;
        let len = self.len();
        let mut out = GridJet::zero(len, m);
        let mut dropped = 0.0;
        let nm = monomial_count(m);
        for a in 0..nm {
            let (da, ea) = monomial(m, a);
            for b in 0..nm {
                let (db, eb) = monomial(m, b);
                let (va, vb) = (&self.vals[a], &o.vals[b]);
                if da + db > 2 {
                    let mx = va.iter().zip(vb).map(|(x, y)| (x * y).abs()).fold(0.0, f64::max);
                    dropped += mx;
                    continue;
                }
                let target = match (da, db) {
                    (0, _) => b,
                    (_, 0) => a,
                    _ => pair_index(m, ea.0, eb.0),
                };
                let t = &mut out.vals[target];
                for p in 0..len {
                    t[p] += va[p] * vb[p];
                }
            }
        }
        (out, dropped)
    }

    /// `J(w(r))` with `w` a list of `m` grid jets.
    pub fn substitute(&self, w: &[GridJet]) -> (Self, f64) {
        let len = self.len();
        let mn = w[0].m;
        let mut out = GridJet::zero(len, mn);
        out.axpy(1.0, &GridJet::constant(self.vals[0].clone(), mn));
        let mut dropped = 0.0;
        for i in 0..self.m {
            let (t, _) = w[i].mul(&GridJet::constant(self.vals[1 + i].clone(), mn));
            out = out.add(&t);
        }
        for i in 0..self.m {
            for j in i..self.m {
                let c = &self.vals[pair_index(self.m, i, j)];
                if c.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let (wij, d1) = w[i].mul(&w[j]);
                let (t, d2) = wij.mul(&GridJet::constant(c.clone(), mn));
                let cmax = c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                dropped += d1 * cmax + d2;
                out = out.add(&t);
            }
        }
        (out, dropped)
    }
}

/// Series matrices stored row-major as nested vectors.
pub type SeriesMatrix = Vec<Vec<FourierSeries>>;

/// Degree-zero/one data of a field: tangent order 0, normal orders 0 and 1.
#[derive(Clone, Debug)]
pub struct Jet01 {
    pub t0: Vec<FourierSeries>,
    pub n0: Vec<FourierSeries>,
    /// `n1[i][j]`: coefficient of `r_j` in normal component `i`.
    pub n1: SeriesMatrix,
}

impl Jet01 {
    pub fn norm(&self) -> f64 {
        let mut acc: f64 = 0.0;
        for f in self.t0.iter().chain(&self.n0) {
            acc = acc.max(f.l1());
        }
        for row in &self.n1 {
            acc = acc.max(row.iter().map(|f| f.l1()).sum());
        }
        acc
    }
}

/// Frequency vector and normal matrix of `U(alpha, A)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub alpha: Vec<f64>,
    pub a: Vec<Vec<f64>>,
}

/// Field on `T^n x R^m` with `n` tangent and `m` normal jet components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldJet {
    pub tangent: Vec<RJet>,
    pub normal: Vec<RJet>,
    #[serde(default)]
    pub frame: Option<Frame>,
}

impl VectorFieldJet {
    pub fn zero(basis: &Arc<Basis>, m: usize) -> Self {
        let n = basis.dim();
        VectorFieldJet { tangent: vec![RJet::zero(basis, m); n], normal: vec![RJet::zero(basis, m); m], frame: None }
    }

    /// `(alpha, A r)`, the straight model of `U(alpha, A)`.
    pub fn linear_model(basis: &Arc<Basis>, alpha: &[f64], a: &[Vec<f64>]) -> Self {
        let m = a.len();
        let mut u = VectorFieldJet::zero(basis, m);
        for (j, t) in u.tangent.iter_mut().enumerate() {
            t.set_const(FourierSeries::constant_like(t.const_term(), alpha[j]));
        }
        for i in 0..m {
            for j in 0..m {
                let c = u.normal[i].const_term().constant_like(a[i][j]);
                u.normal[i].set_linear(j, c);
            }
        }
        u.frame = Some(Frame { alpha: alpha.to_vec(), a: a.to_vec() });
        u
    }

    pub fn n(&self) -> usize {
        self.tangent.len()
    }

    pub fn m(&self) -> usize {
        self.normal.len()
    }

    pub fn basis(&self) -> &Arc<Basis> {
        if let Some(t) = self.tangent.first() {
            t.basis()
        } else {
            self.normal[0].basis()
        }
    }

    pub fn components(&self) -> impl Iterator<Item = &RJet> {
        self.tangent.iter().chain(self.normal.iter())
    }

    fn zip_with(&self, o: &Self, f: impl Fn(&RJet, &RJet) -> RJet) -> Result<Self, FourierError> {
        if self.n() != o.n() || self.m() != o.m() {
            return Err(FourierError::JetMismatch { left: self.m(), right: o.m() });
        }
        Ok(VectorFieldJet {
            tangent: self.tangent.iter().zip(&o.tangent).map(|(a, b)| f(a, b)).collect(),
            normal: self.normal.iter().zip(&o.normal).map(|(a, b)| f(a, b)).collect(),
            frame: self.frame.clone(),
        })
    }

    pub fn add(&self, o: &Self) -> Result<Self, FourierError> {
        self.zip_with(o, |a, b| a.add(b).expect("checked"))
    }

    pub fn sub(&self, o: &Self) -> Result<Self, FourierError> {
        self.zip_with(o, |a, b| a.sub(b).expect("checked"))
    }

    pub fn scale(&self, a: f64) -> Self {
        VectorFieldJet {
            tangent: self.tangent.iter().map(|t| t.scale(a)).collect(),
            normal: self.normal.iter().map(|t| t.scale(a)).collect(),
            frame: None,
        }
    }

    /// Max over components of the jet weighted norm.
    pub fn norm(&self, s: f64, rho: f64) -> f64 {
        self.components().map(|c| c.weighted_norm(s, rho)).fold(0.0, f64::max)
    }

    pub fn tail_norm(&self) -> f64 {
        self.components().map(|c| c.tail_norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, theta: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.tangent.iter().map(|t| t.eval(theta, r)).collect(),
            self.normal.iter().map(|t| t.eval(theta, r)).collect(),
        )
    }

    pub fn j01(&self) -> Jet01 {
        let m = self.m();
        Jet01 {
            t0: self.tangent.iter().map(|t| t.const_term().clone()).collect(),
            n0: self.normal.iter().map(|t| t.const_term().clone()).collect(),
            n1: self.normal.iter().map(|t| (0..m).map(|j| t.linear_term(j).clone()).collect()).collect(),
        }
    }

    /// Copy with tangent order 0 and normal orders 0, 1 removed.
    pub fn higher(&self) -> Self {
        VectorFieldJet {
            tangent: self.tangent.iter().map(|t| t.above_degree(0)).collect(),
            normal: self.normal.iter().map(|t| t.above_degree(1)).collect(),
            frame: self.frame.clone(),
        }
    }

    /// Replace the low-order jet by `j`.
    pub fn with_j01(&self, j: &Jet01) -> Self {
        let mut out = self.clone();
        for (t, f) in out.tangent.iter_mut().zip(&j.t0) {
            t.set_const(f.clone());
        }
        for (i, t) in out.normal.iter_mut().enumerate() {
            t.set_const(j.n0[i].clone());
            for (k, f) in j.n1[i].iter().enumerate() {
                t.set_linear(k, f.clone());
            }
        }
        out
    }

    /// Tangent order-1 coefficient `u_1`: `n x m` matrix of series.
    pub fn u1(&self) -> SeriesMatrix {
        let m = self.m();
        self.tangent.iter().map(|t| (0..m).map(|j| t.linear_term(j).clone()).collect()).collect()
    }

    /// Distance of the low-order jet from `(alpha, 0, A r)` in coefficient l1.
    pub fn frame_defect(&self, alpha: &[f64], a: &[Vec<f64>]) -> f64 {
        let j = self.j01();
        let mut d: f64 = 0.0;
        for (f, &x) in j.t0.iter().zip(alpha) {
            d = d.max((f - &f.constant_like(x)).l1());
        }
        for f in &j.n0 {
            d = d.max(f.l1());
        }
        for (i, row) in j.n1.iter().enumerate() {
            for (k, f) in row.iter().enumerate() {
                d = d.max((f - &f.constant_like(a[i][k])).l1());
            }
        }
        d
    }

    pub fn max_diff(&self, o: &Self) -> f64 {
        self.components().zip(o.components()).map(|(a, b)| a.max_diff(b)).fold(0.0, f64::max)
    }
}
