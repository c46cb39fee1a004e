use nalgebra::DMatrix;
use num_complex::Complex64;

use super::CohomologyError;
use crate::fourier::{FourierSeries, SeriesMatrix};

/// Any retained divisor smaller than this aborts the solve.
pub const DIVISOR_FLOOR: f64 = 1e-13;
const AVERAGE_TOL: f64 = 1e-13;
const COND_MAX: f64 = 1e8;
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn kdot(k: &[i32], alpha: &[f64]) -> f64 {
    k.iter().zip(alpha).map(|(&a, &b)| a as f64 * b).sum()
}

fn check_basis(fs: &[&FourierSeries]) -> Result<(), CohomologyError> {
    for f in fs {
        if !f.same_basis(fs[0]) {
            return Err(CohomologyError::Fourier(crate::fourier::FourierError::OrderMismatch {
                left: fs[0].order(),
                right: f.order(),
            }));
        }
    }
    Ok(())
}

/// Zero-average solution of `L_alpha f = g`.
pub fn solve_tangent(g: &FourierSeries, alpha: &[f64]) -> Result<FourierSeries, CohomologyError> {
    if alpha.len() != g.dim() {
        return Err(CohomologyError::Shape { expected: g.dim(), got: alpha.len() });
    }
    let tol = AVERAGE_TOL * g.l1();
    if g.average().abs() > tol {
        return Err(CohomologyError::NonZeroAverage { average: g.average(), tol });
    }
    let mut f = g.zeros_like();
    let basis = g.basis().clone();
    for i in 1..basis.len() {
        let c = g.coeffs()[i];
        let d = kdot(basis.mode(i), alpha);
        if d.abs() < DIVISOR_FLOOR {
            if c.norm() == 0.0 {
                continue;
            }
            return Err(CohomologyError::ResonantMode { k: basis.mode(i).to_vec(), divisor: d.abs() });
        }
        f.coeffs_mut()[i] = c / (I * d);
    }
    Ok(f)
}

/// `L_alpha f + A f`, the forward map of [`solve_normal`].
pub fn apply_normal(f: &[FourierSeries], alpha: &[f64], a: &[Vec<f64>]) -> Vec<FourierSeries> {
    (0..a.len())
        .map(|i| {
            let mut out = f[i].lie_derivative(alpha);
            for (j, fj) in f.iter().enumerate() {
                if a[i][j] != 0.0 {
                    out.axpy(a[i][j], fj);
                }
            }
            out
        })
        .collect()
}

/// `L_alpha F + [A, F]`, the forward map of [`solve_matrix`].
pub fn apply_matrix(f: &SeriesMatrix, alpha: &[f64], a: &[Vec<f64>]) -> SeriesMatrix {
    let m = a.len();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut out = f[i][j].lie_derivative(alpha);
                    for k in 0..m {
                        if a[i][k] != 0.0 {
                            out.axpy(a[i][k], &f[k][j]);
                        }
                        if a[k][j] != 0.0 {
                            out.axpy(-a[k][j], &f[i][k]);
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

/// Eigendecomposition of a normal matrix `A`, computed once and reused by
/// every solve against the same `(alpha, A)`.
#[derive(Clone, Debug)]
pub struct NormalOperator {
    alpha: Vec<f64>,
    a: Vec<Vec<f64>>,
    eigs: Vec<Complex64>,
    group: Vec<usize>,
    p: DMatrix<Complex64>,
    pinv: DMatrix<Complex64>,
    cond: f64,
    zero_tol: f64,
}

impl NormalOperator {
    pub fn new(alpha: &[f64], a: &[Vec<f64>]) -> Result<Self, CohomologyError> {
        let m = a.len();
        for row in a {
            if row.len() != m {
                return Err(CohomologyError::Shape { expected: m, got: row.len() });
            }
        }
        let scale = a.iter().flatten().fold(1.0f64, |s, x| s.max(x.abs()));
        let am = DMatrix::from_fn(m, m, |i, j| a[i][j]);
        let raw: Vec<Complex64> = if m == 0 {
            Vec::new()
        } else if m == 1 {
            vec![Complex64::new(a[0][0], 0.0)]
        } else {
            am.complex_eigenvalues().iter().cloned().collect()
        };
        // cluster numerically equal eigenvalues
        let mut reps: Vec<(Complex64, usize)> = Vec::new();
        let mut members: Vec<Vec<Complex64>> = Vec::new();
        for &l in &raw {
            match reps.iter().position(|(r, _)| (r - l).norm() <= 1e-9 * scale) {
                Some(g) => {
                    reps[g].1 += 1;
                    members[g].push(l);
                }
                None => {
                    reps.push((l, 1));
                    members.push(vec![l]);
                }
            }
        }
        let ac = am.map(|x| Complex64::new(x, 0.0));
        let mut p = DMatrix::<Complex64>::zeros(m, m);
        let mut eigs = Vec::with_capacity(m);
        let mut group = Vec::with_capacity(m);
        let mut col = 0;
        for (g, (_, mult)) in reps.iter().enumerate() {
            let mean = members[g].iter().sum::<Complex64>() / *mult as f64;
            let shifted = &ac - DMatrix::<Complex64>::identity(m, m) * mean;
            let svd = shifted.svd(false, true);
            let vt = svd.v_t.expect("requested right singular vectors");
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| svd.singular_values[x].partial_cmp(&svd.singular_values[y]).unwrap());
            for &idx in order.iter().take(*mult) {
                if svd.singular_values[idx] > 1e-6 * scale {
                    return Err(CohomologyError::DefectiveMatrix { cond: f64::INFINITY });
                }
                for r in 0..m {
                    p[(r, col)] = vt[(idx, r)].conj();
                }
                eigs.push(mean);
                group.push(g);
                col += 1;
            }
        }
        let (pinv, cond) = if m == 0 {
            (p.clone(), 1.0)
        } else {
            let sv = p.clone().svd(false, false).singular_values;
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            if !(cond <= COND_MAX) {
                return Err(CohomologyError::DefectiveMatrix { cond });
            }
            let pinv = p.clone().try_inverse().ok_or(CohomologyError::DefectiveMatrix { cond })?;
            (pinv, cond)
        };
        Ok(NormalOperator {
            alpha: alpha.to_vec(),
            a: a.to_vec(),
            eigs,
            group,
            p,
            pinv,
            cond,
            zero_tol: 1e-12 * scale,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigs
    }

    /// Condition number of the eigenvector matrix.
    pub fn condition_number(&self) -> f64 {
        self.cond
    }

    fn is_zero_eig(&self, j: usize) -> bool {
        self.eigs[j].norm() <= self.zero_tol
    }

    fn to_eig(&self, v: &[Complex64]) -> Vec<Complex64> {
        let m = self.m();
        (0..m).map(|i| (0..m).map(|j| self.pinv[(i, j)] * v[j]).sum()).collect()
    }

    fn from_eig(&self, v: &[Complex64]) -> Vec<Complex64> {
        let m = self.m();
        (0..m).map(|i| (0..m).map(|j| self.p[(i, j)] * v[j]).sum()).collect()
    }

    fn conj_in(&self, g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        &self.pinv * g * &self.p
    }

    fn conj_out(&self, f: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        &self.p * f * &self.pinv
    }

    /// Spectral projection of a constant vector onto `ker A`.
    pub fn kernel_part(&self, c: &[f64]) -> Vec<f64> {
        let cz: Vec<Complex64> = c.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut h = self.to_eig(&cz);
        for (j, x) in h.iter_mut().enumerate() {
            if !self.is_zero_eig(j) {
                *x = Complex64::new(0.0, 0.0);
            }
        }
        self.from_eig(&h).iter().map(|z| z.re).collect()
    }

    /// Dimension of `ker A`.
    pub fn kernel_dim(&self) -> usize {
        (0..self.m()).filter(|&j| self.is_zero_eig(j)).count()
    }

    /// Projection of a constant matrix onto the commutant of `A`
    /// (the blocks of equal eigenvalues in the eigenbasis).
    pub fn commutant_part(&self, c: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.m();
        let cm = DMatrix::from_fn(m, m, |i, j| Complex64::new(c[i][j], 0.0));
        let mut h = self.conj_in(&cm);
        for i in 0..m {
            for j in 0..m {
                if self.group[i] != self.group[j] {
                    h[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        let out = self.conj_out(&h);
        (0..m).map(|i| (0..m).map(|j| out[(i, j)].re).collect()).collect()
    }

    /// Dimension of the commutant of `A`.
    pub fn commutant_dim(&self) -> usize {
        let m = self.m();
        (0..m).map(|i| (0..m).filter(|&j| self.group[i] == self.group[j]).count()).sum()
    }

    /// Solve `L_alpha f + A f = g`. Components of `<g>` along a zero
    /// eigenvalue must vanish; the matching part of `<f>` is set to zero.
    pub fn solve_normal(&self, g: &[FourierSeries]) -> Result<Vec<FourierSeries>, CohomologyError> {
        let m = self.m();
        if g.len() != m {
            return Err(CohomologyError::Shape { expected: m, got: g.len() });
        }
        if m == 0 {
            return Ok(Vec::new());
        }
        let refs: Vec<&FourierSeries> = g.iter().collect();
        check_basis(&refs)?;
        let basis = g[0].basis().clone();
        let gnorm = g.iter().map(|f| f.l1()).fold(0.0, f64::max);
        let tol = AVERAGE_TOL * gnorm * self.cond;
        let mut out: Vec<FourierSeries> = g.iter().map(|f| f.zeros_like()).collect();
        for i in 0..basis.len() {
            let gk: Vec<Complex64> = g.iter().map(|f| f.coeffs()[i]).collect();
            if i > 0 && gk.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let mut h = self.to_eig(&gk);
            let k = basis.mode(i);
            let ka = kdot(k, &self.alpha);
            for (j, x) in h.iter_mut().enumerate() {
                if i == 0 && self.is_zero_eig(j) {
                    if x.norm() > tol {
                        return Err(CohomologyError::NonZeroAverage { average: x.norm(), tol });
                    }
                    *x = Complex64::new(0.0, 0.0);
                    continue;
                }
                let d = I * ka + self.eigs[j];
                if d.norm() < DIVISOR_FLOOR {
                    return Err(CohomologyError::SmallDivisor { k: k.to_vec(), divisor: d.norm() });
                }
                *x /= d;
            }
            let fk = self.from_eig(&h);
            for (o, z) in out.iter_mut().zip(fk) {
                o.coeffs_mut()[i] = if i == 0 { Complex64::new(z.re, 0.0) } else { z };
            }
        }
        Ok(out)
    }

    /// Solve `L_alpha F + [A, F] = G`. Averages of the conjugated entries
    /// between equal eigenvalues must vanish; those entries of `<F>` are zero.
    pub fn solve_matrix(&self, g: &SeriesMatrix) -> Result<SeriesMatrix, CohomologyError> {
        let m = self.m();
        if g.len() != m || g.iter().any(|row| row.len() != m) {
            return Err(CohomologyError::Shape { expected: m, got: g.len() });
        }
        if m == 0 {
            return Ok(Vec::new());
        }
        let refs: Vec<&FourierSeries> = g.iter().flatten().collect();
        check_basis(&refs)?;
        let basis = g[0][0].basis().clone();
        let gnorm = refs.iter().map(|f| f.l1()).fold(0.0, f64::max);
        let tol = AVERAGE_TOL * gnorm * self.cond * self.cond;
        let mut out: SeriesMatrix = g.iter().map(|row| row.iter().map(|f| f.zeros_like()).collect()).collect();
        for idx in 0..basis.len() {
            let gk = DMatrix::from_fn(m, m, |i, j| g[i][j].coeffs()[idx]);
            if idx > 0 && gk.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let mut h = self.conj_in(&gk);
            let k = basis.mode(idx);
            let ka = kdot(k, &self.alpha);
            for i in 0..m {
                for j in 0..m {
                    if idx == 0 && self.group[i] == self.group[j] {
                        if h[(i, j)].norm() > tol {
                            return Err(CohomologyError::NonZeroDiagonalAverage { i, j, average: h[(i, j)].norm() });
                        }
                        h[(i, j)] = Complex64::new(0.0, 0.0);
                        continue;
                    }
                    let d = I * ka + self.eigs[i] - self.eigs[j];
                    if d.norm() < DIVISOR_FLOOR {
                        return Err(CohomologyError::SmallDivisor { k: k.to_vec(), divisor: d.norm() });
                    }
                    h[(i, j)] /= d;
                }
            }
            let fk = self.conj_out(&h);
            for i in 0..m {
                for j in 0..m {
                    let z = fk[(i, j)];
                    out[i][j].coeffs_mut()[idx] = if idx == 0 { Complex64::new(z.re, 0.0) } else { z };
                }
            }
        }
        Ok(out)
    }
}

/// One-shot [`NormalOperator::solve_normal`].
pub fn solve_normal(g: &[FourierSeries], alpha: &[f64], a: &[Vec<f64>]) -> Result<Vec<FourierSeries>, CohomologyError> {
    NormalOperator::new(alpha, a)?.solve_normal(g)
}

/// One-shot [`NormalOperator::solve_matrix`].
pub fn solve_matrix(g: &SeriesMatrix, alpha: &[f64], a: &[Vec<f64>]) -> Result<SeriesMatrix, CohomologyError> {
    NormalOperator::new(alpha, a)?.solve_matrix(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::random_series;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn rel_residual(a: &[FourierSeries], b: &[FourierSeries]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).l1()).fold(0.0, f64::max);
        let den = b.iter().map(|y| y.l1()).fold(0.0, f64::max);
        num / den
    }

    #[test]
    fn tangent_cosine() {
        let a = 0.7;
        let g = FourierSeries::cos_mode(1, 8, &[1], 1.0);
        let f = solve_tangent(&g, &[a]).unwrap();
        assert!(f.max_diff(&FourierSeries::sin_mode(1, 8, &[1], 1.0 / a)) < 1e-16);
        assert_eq!(solve_tangent(&g.zeros_like(), &[a]).unwrap().l1(), 0.0);
    }

    #[test]
    fn tangent_rejects_average_and_resonance() {
        let g = FourierSeries::constant(1, 4, 1.0);
        assert!(matches!(solve_tangent(&g, &[0.3]), Err(CohomologyError::NonZeroAverage { .. })));
        let h = FourierSeries::cos_mode(2, 4, &[1, -1], 1.0);
        assert!(matches!(solve_tangent(&h, &[1.0, 1.0]), Err(CohomologyError::ResonantMode { .. })));
    }

    #[test]
    fn tangent_forward_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alpha = [golden(), 1.0];
        let g = random_series(&mut rng, 2, 32, 0.3).without_average();
        let f = solve_tangent(&g, &alpha).unwrap();
        assert!((&f.lie_derivative(&alpha) - &g).l1() <= 1e-12 * g.l1());
        assert_eq!(f.average(), 0.0);
    }

    #[test]
    fn normal_constant_and_single_mode() {
        let a = -0.4;
        let c = 1.3;
        let f = solve_normal(&[FourierSeries::constant(1, 6, c)], &[0.5], &[vec![a]]).unwrap();
        assert!((f[0].average() - c / a).abs() < 1e-15);
        let g = FourierSeries::sin_mode(1, 6, &[3], 2.0);
        let f = solve_normal(&[g.clone()], &[0.5], &[vec![a]]).unwrap();
        let expect = g.coeff(&[3]) / Complex64::new(a, 1.5);
        assert!((f[0].coeff(&[3]) - expect).norm() < 1e-15);
    }

    #[test]
    fn normal_nondiagonal_forward() {
        let a = vec![vec![0.0, 1.0], vec![-2.0, -3.0]];
        let op = NormalOperator::new(&[golden()], &a).unwrap();
        let mut e: Vec<f64> = op.eigenvalues().iter().map(|z| z.re).collect();
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((e[0] + 2.0).abs() < 1e-12 && (e[1] + 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = vec![random_series(&mut rng, 1, 32, 0.2), random_series(&mut rng, 1, 32, 0.2)];
        let f = op.solve_normal(&g).unwrap();
        assert!(rel_residual(&apply_normal(&f, &[golden()], &a), &g) < 1e-11);
    }

    #[test]
    fn normal_complex_eigenvalues() {
        let a = vec![vec![-0.1, 1.0], vec![-1.0, -0.1]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = vec![random_series(&mut rng, 1, 16, 0.3), random_series(&mut rng, 1, 16, 0.3)];
        let f = solve_normal(&g, &[golden()], &a).unwrap();
        assert!(rel_residual(&apply_normal(&f, &[golden()], &a), &g) < 1e-12);
    }

    #[test]
    fn defective_matrix_rejected() {
        let a = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        assert!(matches!(NormalOperator::new(&[0.3], &a), Err(CohomologyError::DefectiveMatrix { .. })));
    }

    #[test]
    fn matrix_constant_off_diagonal() {
        let (a1, a2) = (-0.3, -0.8);
        let a = vec![vec![a1, 0.0], vec![0.0, a2]];
        let z = FourierSeries::zeros(1, 4);
        let g12 = 0.25;
        let g = vec![vec![z.clone(), z.constant_like(g12)], vec![z.clone(), z.clone()]];
        let f = solve_matrix(&g, &[golden()], &a).unwrap();
        assert!((f[0][1].average() - g12 / (a1 - a2)).abs() < 1e-15);
        assert!(f[0][0].l1() + f[1][0].l1() + f[1][1].l1() < 1e-16);
        let zero = vec![vec![z.clone(), z.clone()], vec![z.clone(), z]];
        let f0 = solve_matrix(&zero, &[golden()], &a).unwrap();
        assert!(f0.iter().flatten().all(|x| x.l1() == 0.0));
    }

    #[test]
    fn matrix_forward_oracle() {
        let a = vec![vec![-0.2, 0.0], vec![0.0, -0.9]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g: SeriesMatrix = (0..2).map(|_| (0..2).map(|_| random_series(&mut rng, 1, 16, 0.3)).collect()).collect();
        g[0][0].set_average(0.0);
        g[1][1].set_average(0.0);
        let f = solve_matrix(&g, &[golden()], &a).unwrap();
        let back = apply_matrix(&f, &[golden()], &a);
        let flat_b: Vec<FourierSeries> = back.into_iter().flatten().collect();
        let flat_g: Vec<FourierSeries> = g.into_iter().flatten().collect();
        assert!(rel_residual(&flat_b, &flat_g) < 1e-11);
        assert_eq!(f[0][0].average(), 0.0);
    }

    #[test]
    fn matrix_rejects_diagonal_average() {
        let a = vec![vec![-0.2]];
        let g = vec![vec![FourierSeries::constant(1, 4, 1.0)]];
        assert!(matches!(solve_matrix(&g, &[0.3], &a), Err(CohomologyError::NonZeroDiagonalAverage { .. })));
    }

    #[test]
    fn projections_for_scalar_matrix() {
        let eta = 0.1;
        let a = vec![vec![-eta, 0.0], vec![0.0, -eta]];
        let op = NormalOperator::new(&[golden(), 1.0], &a).unwrap();
        assert_eq!(op.commutant_dim(), 4);
        assert_eq!(op.kernel_dim(), 0);
        let c = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(op.commutant_part(&c), c);
        let sing = NormalOperator::new(&[0.3], &[vec![0.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(sing.kernel_dim(), 1);
        let kp = sing.kernel_part(&[2.0, 5.0]);
        assert!((kp[0] - 2.0).abs() < 1e-14 && kp[1].abs() < 1e-14);
    }

    #[test]
    fn eta_uniform_bound() {
        let alpha = [golden()];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_series(&mut rng, 1, 24, 0.4).without_average();
        // tangent-style bound: sum |g_k| / |k alpha|
        let bound: f64 = g.basis().modes().iter().zip(g.coeffs()).skip(1)
            .map(|(k, c)| 2.0 * c.norm() / (k[0] as f64 * alpha[0]).abs())
            .sum();
        for eta in [-0.3, -0.05, -1e-3, 0.0, 1e-3, 0.05, 0.3] {
            let f = solve_normal(std::slice::from_ref(&g), &alpha, &[vec![-eta]]).unwrap();
            assert!(f[0].l1() <= bound * (1.0 + 1e-14), "eta {eta}");
        }
    }

    #[test]
    fn linear_and_deterministic() {
        let alpha = [golden(), 1.0];
        let a = vec![vec![-0.1, 0.3], vec![0.0, -0.5]];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g1: Vec<FourierSeries> = (0..2).map(|_| random_series(&mut rng, 2, 10, 0.4)).collect();
        let g2: Vec<FourierSeries> = (0..2).map(|_| random_series(&mut rng, 2, 10, 0.4)).collect();
        let op = NormalOperator::new(&alpha, &a).unwrap();
        let f1 = op.solve_normal(&g1).unwrap();
        let f2 = op.solve_normal(&g2).unwrap();
        let mix: Vec<FourierSeries> = g1.iter().zip(&g2).map(|(x, y)| &x.scale(2.0) + &y.scale(-0.5)).collect();
        let fm = op.solve_normal(&mix).unwrap();
        for i in 0..2 {
            let lin = &f1[i].scale(2.0) + &f2[i].scale(-0.5);
            assert!((&lin - &fm[i]).l1() <= 1e-13 * fm[i].l1().max(1.0));
        }
        assert_eq!(op.solve_normal(&g1).unwrap(), f1);
    }
}
