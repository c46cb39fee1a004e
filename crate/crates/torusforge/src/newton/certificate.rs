use serde::{Deserialize, Serialize};

use super::NewtonError;

/// Fit of `r_{k+1} ~ c r_k^p` over consecutive residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub exponent: f64,
    pub constant: f64,
}

/// Least-squares fit of `log r_{k+1}` against `log r_k`. Exact zeros (a step
/// that landed on the answer) are dropped; at least three decreasing positive
/// residuals are needed.
pub fn quadratic_certificate(residuals: &[f64]) -> Result<Certificate, NewtonError> {
    let r: Vec<f64> = residuals.iter().cloned().filter(|&x| x > 0.0).collect();
    if r.len() < 3 || r.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(NewtonError::InsufficientData { got: r.len() });
    }
    let xs: Vec<f64> = r[..r.len() - 1].iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = r[1..].iter().map(|x| x.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(Certificate { exponent, constant: (my - exponent * mx).exp() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic_sequence() {
        let c = quadratic_certificate(&[1e-2, 1e-4, 1e-8]).unwrap();
        assert!((c.exponent - 2.0).abs() < 1e-12);
        assert!((c.constant - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_sequence_is_flagged() {
        let c = quadratic_certificate(&[1e-2, 5e-3, 2.5e-3]).unwrap();
        assert!((c.exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_or_increasing_input_is_rejected() {
        assert_eq!(quadratic_certificate(&[1e-2, 1e-4]), Err(NewtonError::InsufficientData { got: 2 }));
        assert!(quadratic_certificate(&[1e-2, 1e-4, 1e-3]).is_err());
        assert!(quadratic_certificate(&[1e-2, 1e-4, 0.0]).is_err());
    }
}
