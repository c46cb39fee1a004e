use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::grid::Basis;
use super::FourierError;

const PRUNE_REL: f64 = 1e-16;
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative outer-band mass above which a grid composition is rejected.
pub const DEFAULT_COMPOSE_TOL: f64 = 1e-6;

/// Real-valued truncated Fourier series on `T^n`.
///
/// Stores the half-space of modes; `coeff(-k)` is always `conj(coeff(k))`.
#[derive(Clone)]
pub struct FourierSeries {
    basis: Arc<Basis>,
    coeffs: Vec<Complex64>,
}

impl std::fmt::Debug for FourierSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let nz: Vec<_> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 0.0)
            .take(8)
            .map(|(i, c)| (self.basis.mode(i).to_vec(), *c))
            .collect();
        f.debug_struct("FourierSeries")
            .field("dim", &self.dim())
            .field("order", &self.order())
            .field("leading", &nz)
            .finish()
    }
}

impl PartialEq for FourierSeries {
    fn eq(&self, other: &Self) -> bool {
        self.same_basis(other) && self.coeffs == other.coeffs
    }
}

impl FourierSeries {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self::zeros_on(Basis::get(dim, order))
    }

    pub fn zeros_on(basis: Arc<Basis>) -> Self {
        let n = basis.len();
        FourierSeries { basis, coeffs: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn constant(dim: usize, order: usize, c: f64) -> Self {
        let mut f = Self::zeros(dim, order);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Same basis as `self`, all coefficients zero.
    pub fn zeros_like(&self) -> Self {
        Self::zeros_on(self.basis.clone())
    }

    pub fn constant_like(&self, c: f64) -> Self {
        let mut f = self.zeros_like();
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Build from `(k, f_k)` pairs; the conjugate mode is implied.
    pub fn from_modes(
        dim: usize,
        order: usize,
        modes: &[(Vec<i32>, Complex64)],
    ) -> Result<Self, FourierError> {
        let mut f = Self::zeros(dim, order);
        for (k, c) in modes {
            f.add_to_coeff(k, *c)?;
        }
        Ok(f)
    }

    /// `amp * cos(k . theta)`.
    pub fn cos_mode(dim: usize, order: usize, k: &[i32], amp: f64) -> Self {
        let mut f = Self::zeros(dim, order);
        if k.iter().all(|&x| x == 0) {
            f.coeffs[0] = Complex64::new(amp, 0.0);
        } else {
            f.add_to_coeff(k, Complex64::new(amp / 2.0, 0.0)).expect("mode outside truncation");
        }
        f
    }

    /// `amp * sin(k . theta)`.
    pub fn sin_mode(dim: usize, order: usize, k: &[i32], amp: f64) -> Self {
        let mut f = Self::zeros(dim, order);
        if k.iter().any(|&x| x != 0) {
            f.add_to_coeff(k, Complex64::new(0.0, -amp / 2.0)).expect("mode outside truncation");
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn same_basis(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
    }

    /// Half-space coefficients, indexed like `basis().modes()`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of any mode; zero outside the truncation.
    pub fn coeff(&self, k: &[i32]) -> Complex64 {
        match self.basis.find(k) {
            None => Complex64::new(0.0, 0.0),
            Some((i, false)) => self.coeffs[i],
            Some((i, true)) => self.coeffs[i].conj(),
        }
    }

    /// Add `c` to mode `k` (and `conj(c)` to `-k`).
    pub fn add_to_coeff(&mut self, k: &[i32], c: Complex64) -> Result<(), FourierError> {
        if k.len() != self.dim() {
            return Err(FourierError::DimensionMismatch { left: self.dim(), right: k.len() });
        }
        match self.basis.find(k) {
            None => Err(FourierError::ModeOutOfRange { mode: k.to_vec(), order: self.order() }),
            Some((0, _)) => {
                self.coeffs[0] += Complex64::new(c.re, 0.0);
                Ok(())
            }
            Some((i, false)) => {
                self.coeffs[i] += c;
                Ok(())
            }
            Some((i, true)) => {
                self.coeffs[i] += c.conj();
                Ok(())
            }
        }
    }

    /// Mean value over the torus.
    pub fn average(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn set_average(&mut self, c: f64) {
        self.coeffs[0] = Complex64::new(c, 0.0);
    }

    pub fn without_average(&self) -> Self {
        let mut f = self.clone();
        f.coeffs[0] = Complex64::new(0.0, 0.0);
        f
    }

    /// `sum_k |f_k| e^{|k|_1 s}`; `+inf` on overflow.
    pub fn weighted_norm(&self, s: f64) -> f64 {
        let mut acc = self.coeffs[0].norm();
        for i in 1..self.coeffs.len() {
            let c = self.coeffs[i].norm();
            if c > 0.0 {
                acc += 2.0 * c * (self.basis.l1(i) as f64 * s).exp();
            }
        }
        if acc.is_nan() {
            f64::INFINITY
        } else {
            acc
        }
    }

    /// Coefficient l1 norm; equals `weighted_norm(0)`.
    pub fn l1(&self) -> f64 {
        self.weighted_norm(0.0)
    }

    /// l1 mass of the modes with `|k|_1 > K/2`.
    pub fn tail_norm(&self) -> f64 {
        let half = self.order() as u32 / 2;
        let mut acc = 0.0;
        for i in 1..self.coeffs.len() {
            if self.basis.l1(i) > half {
                acc += 2.0 * self.coeffs[i].norm();
            }
        }
        acc
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Zero every coefficient below `1e-16` times the l1 norm.
    pub fn prune(&mut self) {
        let thr = PRUNE_REL * self.l1();
        for c in self.coeffs.iter_mut() {
            if c.norm() < thr {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn pruned(mut self) -> Self {
        self.prune();
        self
    }

    fn check(&self, other: &Self) -> Result<(), FourierError> {
        if self.dim() != other.dim() {
            return Err(FourierError::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        if self.order() != other.order() {
            return Err(FourierError::OrderMismatch { left: self.order(), right: other.order() });
        }
        Ok(())
    }

    pub fn scale(&self, a: f64) -> Self {
        FourierSeries { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|c| c * a).collect() }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert!(self.same_basis(x), "series bases differ");
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += d * a;
        }
    }

    /// Dealiased truncated product.
    pub fn multiply(&self, other: &Self) -> Result<Self, FourierError> {
        self.check(other)?;
        let a = self.to_grid();
        let b = other.to_grid();
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Ok(Self::from_grid(&self.basis, &prod))
    }

    /// `k -> i k_j f_k`.
    pub fn differentiate(&self, axis: usize) -> Result<Self, FourierError> {
        if axis >= self.dim() {
            return Err(FourierError::AxisOutOfRange { axis, dim: self.dim() });
        }
        let mut f = self.clone();
        for (i, c) in f.coeffs.iter_mut().enumerate() {
            *c *= I * self.basis.mode(i)[axis] as f64;
        }
        Ok(f)
    }

    /// `L_alpha f = f' . alpha`, i.e. `k -> i (k . alpha) f_k`.
    pub fn lie_derivative(&self, alpha: &[f64]) -> Self {
        assert_eq!(alpha.len(), self.dim(), "frequency vector has wrong length");
        let mut f = self.clone();
        for (i, c) in f.coeffs.iter_mut().enumerate() {
            *c *= I * dot(self.basis.mode(i), alpha);
        }
        f
    }

    /// Values on the basis grid.
    pub fn to_grid(&self) -> Vec<f64> {
        let grid = self.basis.grid();
        let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
        data[self.basis.grid_pos(0)] += self.coeffs[0];
        for i in 1..self.coeffs.len() {
            let c = self.coeffs[i];
            if c.re != 0.0 || c.im != 0.0 {
                data[self.basis.grid_pos(i)] += c;
                data[self.basis.grid_neg(i)] += c.conj();
            }
        }
        grid.transform(&mut data, false);
        data.into_iter().map(|z| z.re).collect()
    }

    /// Project grid values onto the retained modes.
    pub fn from_grid(basis: &Arc<Basis>, values: &[f64]) -> Self {
        Self::from_grid_checked(basis, values).0
    }

    /// Like `from_grid`, also returning the l1 mass found in the outer band
    /// `|k|_inf > 2K` of the grid spectrum (an aliasing indicator).
    pub fn from_grid_checked(basis: &Arc<Basis>, values: &[f64]) -> (Self, f64) {
        let grid = basis.grid();
        assert_eq!(values.len(), grid.len(), "grid value count mismatch");
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        grid.transform(&mut data, true);
        let inv = 1.0 / grid.len() as f64;
        let mut f = Self::zeros_on(basis.clone());
        for i in 0..basis.len() {
            f.coeffs[i] = data[basis.grid_pos(i)] * inv;
        }
        f.coeffs[0].im = 0.0;
        let size = grid.size();
        let band = 2 * basis.order();
        let mut outer = 0.0;
        for (p, z) in data.iter().enumerate() {
            let mut q = p;
            let mut far = false;
            for _ in 0..basis.dim() {
                let j = q % size;
                q /= size;
                let kk = if j > size / 2 { size - j } else { j };
                if kk > band {
                    far = true;
                    break;
                }
            }
            if far {
                outer += z.norm() * inv;
            }
        }
        (f.pruned(), outer)
    }

    /// Series of `h(f(theta))` for a pointwise map `h`, by grid projection.
    pub fn map_pointwise(&self, h: impl Fn(f64) -> f64) -> Self {
        let vals: Vec<f64> = self.to_grid().into_iter().map(h).collect();
        Self::from_grid(&self.basis, &vals)
    }

    /// Point evaluation.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.dim(), "point has wrong dimension");
        let mut acc = self.coeffs[0].re;
        for i in 1..self.coeffs.len() {
            let c = self.coeffs[i];
            if c.re != 0.0 || c.im != 0.0 {
                let ph = dot(self.basis.mode(i), theta);
                acc += 2.0 * (c.re * ph.cos() - c.im * ph.sin());
            }
        }
        acc
    }

    /// Value and gradient at a point.
    pub fn eval_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.dim();
        let mut val = self.coeffs[0].re;
        let mut grad = vec![0.0; n];
        for i in 1..self.coeffs.len() {
            let c = self.coeffs[i];
            if c.re != 0.0 || c.im != 0.0 {
                let k = self.basis.mode(i);
                let ph = dot(k, theta);
                let (s, co) = ph.sin_cos();
                val += 2.0 * (c.re * co - c.im * s);
                let d = -2.0 * (c.re * s + c.im * co);
                for a in 0..n {
                    grad[a] += d * k[a] as f64;
                }
            }
        }
        (val, grad)
    }

    /// Evaluation at many points, using per-axis phase tables.
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let nz: Vec<usize> =
            (1..self.coeffs.len()).filter(|&i| self.coeffs[i].norm() > 0.0).collect();
        let n = self.dim();
        let k = self.order();
        let c0 = self.coeffs[0].re;
        let one = |pt: &Vec<f64>| -> f64 {
            if nz.is_empty() {
                return c0;
            }
            let mut tables = Vec::with_capacity(n);
            for &x in pt.iter() {
                let base = Complex64::from_polar(1.0, x);
                let mut t = Vec::with_capacity(k + 1);
                let mut z = Complex64::new(1.0, 0.0);
                for _ in 0..=k {
                    t.push(z);
                    z *= base;
                }
                tables.push(t);
            }
            let mut acc = 0.0;
            for &i in &nz {
                let mode = self.basis.mode(i);
                let mut z = self.coeffs[i];
                for a in 0..n {
                    let e = mode[a];
                    if e > 0 {
                        z *= tables[a][e as usize];
                    } else if e < 0 {
                        z *= tables[a][(-e) as usize].conj();
                    }
                }
                acc += z.re;
            }
            c0 + 2.0 * acc
        };
        if points.len() > 2048 && nz.len() > 8 {
            points.par_iter().map(one).collect()
        } else {
            points.iter().map(one).collect()
        }
    }

    /// `f o (id + v)` by grid evaluation and forward transform.
    pub fn compose_torus(&self, v: &[FourierSeries]) -> Result<Self, FourierError> {
        self.compose_torus_with_tol(v, DEFAULT_COMPOSE_TOL)
    }

    pub fn compose_torus_with_tol(&self, v: &[FourierSeries], tol: f64) -> Result<Self, FourierError> {
        if v.len() != self.dim() {
            return Err(FourierError::DimensionMismatch { left: self.dim(), right: v.len() });
        }
        for vi in v {
            self.check(vi)?;
        }
        if v.iter().all(|vi| vi.coeffs.iter().all(|c| c.norm() == 0.0)) {
            return Ok(self.clone());
        }
        let vals = self.eval_many(&shifted_grid_points(&self.basis, v));
        let (f, outer) = Self::from_grid_checked(&self.basis, &vals);
        let scale = f.l1().max(f64::MIN_POSITIVE);
        if !(outer <= tol * scale) {
            return Err(FourierError::CompositionDivergence { outer: outer / scale, tol });
        }
        Ok(f)
    }

    /// Re-truncate (or zero-extend) to another order.
    pub fn with_order(&self, order: usize) -> Self {
        let mut f = Self::zeros(self.dim(), order);
        for (i, c) in self.coeffs.iter().enumerate() {
            if let Some((j, conj)) = f.basis.find(self.basis.mode(i)) {
                f.coeffs[j] = if conj { c.conj() } else { *c };
            }
        }
        f
    }

    /// Largest absolute coefficient difference.
    pub fn max_diff(&self, other: &Self) -> f64 {
        assert!(self.same_basis(other), "series bases differ");
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Nonzero canonical modes as `(k, f_k)`.
    pub fn nonzero_modes(&self) -> Vec<(Vec<i32>, Complex64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(i, c)| (self.basis.mode(i).to_vec(), *c))
            .collect()
    }
}

/// Evaluate several series sharing one basis at the same points.
///
/// Returns `out[j][p] = series[j](points[p])`. The phases `e^{i k.theta}` are
/// built once per point and reused for every series.
pub fn eval_many_multi(series: &[&FourierSeries], points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if series.is_empty() {
        return Vec::new();
    }
    let basis = series[0].basis.clone();
    for f in series {
        assert!(f.same_basis(series[0]), "series bases differ");
    }
    let n = basis.dim();
    let k = basis.order();
    // phases are built only for modes some series actually uses
    let mut used = vec![usize::MAX; basis.len()];
    let mut active: Vec<usize> = Vec::new();
    let terms: Vec<Vec<(usize, Complex64)>> = series
        .iter()
        .map(|f| {
            let mut t = Vec::new();
            for (i, &c) in f.coeffs.iter().enumerate().skip(1) {
                if c.re != 0.0 || c.im != 0.0 {
                    if used[i] == usize::MAX {
                        used[i] = active.len();
                        active.push(i);
                    }
                    t.push((used[i], c));
                }
            }
            t
        })
        .collect();
    let one = |pt: &Vec<f64>| -> Vec<f64> {
        let mut phase = Vec::with_capacity(active.len());
        if !active.is_empty() {
            let mut tables = Vec::with_capacity(n);
            for &x in pt.iter() {
                let base = Complex64::from_polar(1.0, x);
                let mut t = Vec::with_capacity(k + 1);
                let mut z = Complex64::new(1.0, 0.0);
                for _ in 0..=k {
                    t.push(z);
                    z *= base;
                }
                tables.push(t);
            }
            for &i in &active {
                let mode = basis.mode(i);
                let mut z = Complex64::new(1.0, 0.0);
                for a in 0..n {
                    let e = mode[a];
                    if e > 0 {
                        z *= tables[a][e as usize];
                    } else if e < 0 {
                        z *= tables[a][(-e) as usize].conj();
                    }
                }
                phase.push(z);
            }
        }
        series
            .iter()
            .zip(&terms)
            .map(|(f, t)| {
                let mut acc = 0.0;
                for &(q, c) in t {
                    acc += c.re * phase[q].re - c.im * phase[q].im;
                }
                f.coeffs[0].re + 2.0 * acc
            })
            .collect()
    };
    let per_point: Vec<Vec<f64>> = if points.len() > 512 {
        points.par_iter().map(one).collect()
    } else {
        points.iter().map(one).collect()
    };
    let mut out = vec![vec![0.0; points.len()]; series.len()];
    for (p, vals) in per_point.into_iter().enumerate() {
        for (j, x) in vals.into_iter().enumerate() {
            out[j][p] = x;
        }
    }
    out
}

/// Grid points moved by `v`: `theta + v(theta)`.
pub(crate) fn shifted_grid_points(basis: &Arc<Basis>, v: &[FourierSeries]) -> Vec<Vec<f64>> {
    let grid = basis.grid();
    let vg: Vec<Vec<f64>> = v.iter().map(|x| x.to_grid()).collect();
    (0..grid.len())
        .map(|p| {
            let mut pt = grid.point(p);
            for (a, x) in pt.iter_mut().enumerate() {
                *x += vg[a][p];
            }
            pt
        })
        .collect()
}

pub(crate) fn dot(k: &[i32], x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum()
}

impl Add for &FourierSeries {
    type Output = FourierSeries;
    fn add(self, rhs: &FourierSeries) -> FourierSeries {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &FourierSeries {
    type Output = FourierSeries;
    fn sub(self, rhs: &FourierSeries) -> FourierSeries {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&FourierSeries> for FourierSeries {
    fn add_assign(&mut self, rhs: &FourierSeries) {
        assert!(self.same_basis(rhs), "series bases differ");
        for (c, d) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c += d;
        }
    }
}

impl SubAssign<&FourierSeries> for FourierSeries {
    fn sub_assign(&mut self, rhs: &FourierSeries) {
        assert!(self.same_basis(rhs), "series bases differ");
        for (c, d) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c -= d;
        }
    }
}

impl Neg for &FourierSeries {
    type Output = FourierSeries;
    fn neg(self) -> FourierSeries {
        self.scale(-1.0)
    }
}

/// # Panics
/// On mismatched bases; use [`FourierSeries::multiply`] for a checked product.
impl Mul for &FourierSeries {
    type Output = FourierSeries;
    fn mul(self, rhs: &FourierSeries) -> FourierSeries {
        self.multiply(rhs).expect("series bases differ")
    }
}

impl Mul<f64> for &FourierSeries {
    type Output = FourierSeries;
    fn mul(self, a: f64) -> FourierSeries {
        self.scale(a)
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesRepr {
    dim: usize,
    order: usize,
    coeffs: Vec<Vec<f64>>,
}

impl Serialize for FourierSeries {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let coeffs = self
            .nonzero_modes()
            .into_iter()
            .map(|(k, c)| {
                let mut row: Vec<f64> = k.iter().map(|&x| x as f64).collect();
                row.push(c.re);
                row.push(c.im);
                row
            })
            .collect();
        SeriesRepr { dim: self.dim(), order: self.order(), coeffs }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = SeriesRepr::deserialize(d)?;
        if r.dim == 0 {
            return Err(D::Error::custom("series dimension must be at least 1"));
        }
        let mut f = FourierSeries::zeros(r.dim, r.order);
        for row in &r.coeffs {
            if row.len() != r.dim + 2 {
                return Err(D::Error::custom("coefficient row must be [k..., re, im]"));
            }
            let mut k = Vec::with_capacity(r.dim);
            for &x in &row[..r.dim] {
                if x.fract() != 0.0 {
                    return Err(D::Error::custom("mode index must be an integer"));
                }
                k.push(x as i32);
            }
            let c = Complex64::new(row[r.dim], row[r.dim + 1]);
            f.add_to_coeff(&k, c).map_err(D::Error::custom)?;
        }
        Ok(f)
    }
}
