//! Pointwise dense algebra on tiny row-major matrices.

use nalgebra::DMatrix;

/// Inverse of the `n x n` row-major matrix `a` by Gauss-Jordan with partial pivoting.
pub fn inverse_small(a: &[f64], n: usize) -> Option<Vec<f64>> {
    match n {
        1 => {
            if a[0] == 0.0 {
                None
            } else {
                Some(vec![1.0 / a[0]])
            }
        }
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            Some(vec![a[3] / det, -a[1] / det, -a[2] / det, a[0] / det])
        }
        _ => {
            let mut m = a.to_vec();
            let mut inv = vec![0.0; n * n];
            for i in 0..n {
                inv[i * n + i] = 1.0;
            }
            for c in 0..n {
                let p = (c..n).max_by(|&x, &y| m[x * n + c].abs().partial_cmp(&m[y * n + c].abs()).unwrap())?;
                if m[p * n + c] == 0.0 {
                    return None;
                }
                if p != c {
                    for j in 0..n {
                        m.swap(p * n + j, c * n + j);
                        inv.swap(p * n + j, c * n + j);
                    }
                }
                let d = m[c * n + c];
                for j in 0..n {
                    m[c * n + j] /= d;
                    inv[c * n + j] /= d;
                }
                for r in 0..n {
                    if r != c {
                        let f = m[r * n + c];
                        if f != 0.0 {
                            for j in 0..n {
                                m[r * n + j] -= f * m[c * n + j];
                                inv[r * n + j] -= f * inv[c * n + j];
                            }
                        }
                    }
                }
            }
            Some(inv)
        }
    }
}

pub fn min_singular_value(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0].abs(),
        _ => DMatrix::from_row_slice(n, n, a).singular_values().iter().cloned().fold(f64::INFINITY, f64::min),
    }
}
