//! Random test objects shared by the unit tests.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::fourier::{monomial_count, random_series, Basis, FourierSeries, RJet, VectorFieldJet};
use crate::geometry::Conjugacy;

pub fn rand_jet(rng: &mut ChaCha8Rng, basis: &Arc<Basis>, m: usize, size: f64, decay: f64) -> RJet {
    let coeffs = (0..monomial_count(m))
        .map(|_| random_series(rng, basis.dim(), basis.order(), decay).scale(size))
        .collect();
    RJet::from_coeffs(m, coeffs).unwrap()
}

pub fn rand_field(rng: &mut ChaCha8Rng, basis: &Arc<Basis>, m: usize, size: f64, decay: f64) -> VectorFieldJet {
    let n = basis.dim();
    VectorFieldJet {
        tangent: (0..n).map(|_| rand_jet(rng, basis, m, size, decay)).collect(),
        normal: (0..m).map(|_| rand_jet(rng, basis, m, size, decay)).collect(),
        frame: None,
    }
}

pub fn fix_origin(mut v: FourierSeries) -> FourierSeries {
    let z = vec![0.0; v.dim()];
    let c = v.average() - v.eval(&z);
    v.set_average(c);
    v
}

pub fn rand_conj(rng: &mut ChaCha8Rng, basis: &Arc<Basis>, m: usize, size: f64) -> Conjugacy {
    let (n, k) = (basis.dim(), basis.order());
    let phi = (0..n).map(|_| fix_origin(random_series(rng, n, k, 1.5).scale(size))).collect();
    let r0 = (0..m).map(|_| random_series(rng, n, k, 1.5).scale(size)).collect();
    let r1 = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut f = random_series(rng, n, k, 1.5).scale(size);
                    if i == j {
                        f.set_average(f.average() + 1.0);
                    }
                    f
                })
                .collect()
        })
        .collect();
    Conjugacy::general(phi, r0, r1).unwrap()
}

pub fn sym_conj(rng: &mut ChaCha8Rng, basis: &Arc<Basis>, size: f64, xi: Vec<f64>) -> Conjugacy {
    let (n, k) = (basis.dim(), basis.order());
    let phi = (0..n).map(|_| fix_origin(random_series(rng, n, k, 1.5).scale(size))).collect();
    let s = random_series(rng, n, k, 1.5).scale(size);
    Conjugacy::symplectic(phi, s, xi).unwrap()
}

