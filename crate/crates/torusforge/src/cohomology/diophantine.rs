use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::CohomologyError;

/// Frequency data and constants of the Diophantine conditions.
///
/// For `n = 1` the frequency is read as a rotation number: `|k alpha|` is the
/// distance of `k alpha` to the integers. For `n >= 2` it is the plain value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineParams {
    pub gamma: f64,
    pub tau: f64,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub eigs: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub ok: bool,
    /// Divisor at the pair with the smallest ratio divisor / bound.
    pub worst_divisor: f64,
    /// That ratio; the condition holds when it is at least 1.
    pub margin: f64,
    pub k: Vec<i32>,
    pub l: Vec<i32>,
    pub kmax: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineReport {
    pub dio1: ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dio2: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dio3: Option<ConditionReport>,
}

impl DiophantineReport {
    pub fn ok(&self) -> bool {
        self.dio1.ok && self.dio2.as_ref().is_none_or(|r| r.ok) && self.dio3.as_ref().is_none_or(|r| r.ok)
    }
}

/// Call `f` on every `k in Z^n` with `0 < |k|_1 <= kmax`; with `half` only
/// on those whose first nonzero entry is positive.
pub fn for_each_mode(n: usize, kmax: usize, half: bool, mut f: impl FnMut(&[i32])) {
    fn rec(k: &mut Vec<i32>, pos: usize, budget: i32, half: bool, lead: bool, f: &mut dyn FnMut(&[i32])) {
        if pos == k.len() {
            if !lead {
                f(k);
            }
            return;
        }
        // `lead`: all previous entries are zero
        let lo = if half && lead { 0 } else { -budget };
        for x in lo..=budget {
            k[pos] = x;
            rec(k, pos + 1, budget - x.abs(), half, lead && x == 0, f);
        }
        k[pos] = 0;
    }
    let mut k = vec![0; n];
    rec(&mut k, 0, kmax as i32, half, true, &mut f);
}

fn small_divisor_1(k: &[i32], alpha: &[f64]) -> f64 {
    let d: f64 = k.iter().zip(alpha).map(|(&a, &b)| a as f64 * b).sum();
    if alpha.len() == 1 {
        (d - d.round()).abs()
    } else {
        d.abs()
    }
}

fn l1(k: &[i32]) -> f64 {
    k.iter().map(|x| x.abs() as f64).sum()
}

struct Worst {
    ratio: f64,
    divisor: f64,
    k: Vec<i32>,
    l: Vec<i32>,
}

impl Worst {
    fn new() -> Self {
        Worst { ratio: f64::INFINITY, divisor: f64::INFINITY, k: Vec::new(), l: Vec::new() }
    }

    fn offer(&mut self, ratio: f64, divisor: f64, k: &[i32], l: &[i32]) {
        if ratio < self.ratio {
            *self = Worst { ratio, divisor, k: k.to_vec(), l: l.to_vec() };
        }
    }

    fn report(self, kmax: usize) -> ConditionReport {
        ConditionReport {
            ok: self.ratio >= 1.0,
            worst_divisor: self.divisor,
            margin: self.ratio,
            k: self.k,
            l: self.l,
            kmax,
        }
    }
}

/// Scan the three conditions over `0 < |k|_1 <= kmax` and report the worst pair of each.
///
/// Conditions on the normal eigenvalues are only scanned when `eigs` is nonempty.
pub fn check_diophantine(p: &DiophantineParams, kmax: usize) -> DiophantineReport {
    let kmax = kmax.max(1);
    let n = p.alpha.len();
    let mut w1 = Worst::new();
    for_each_mode(n, kmax, true, |k| {
        let d = small_divisor_1(k, &p.alpha);
        let bound = p.gamma / l1(k).powf(p.tau);
        w1.offer(d / bound, d, k, &[]);
    });
    if p.eigs.is_empty() {
        return DiophantineReport { dio1: w1.report(kmax), dio2: None, dio3: None };
    }
    let m = p.eigs.len();
    let mut w2 = Worst::new();
    let mut w3 = Worst::new();
    let mut ls: Vec<Vec<i32>> = Vec::new();
    for_each_mode(m, 2, false, |l| {
        if l1(l) == 2.0 {
            ls.push(l.to_vec());
        }
    });
    for_each_mode(n, kmax, false, |k| {
        let ka: f64 = k.iter().zip(&p.alpha).map(|(&a, &b)| a as f64 * b).sum();
        let bound = p.gamma / (1.0 + l1(k)).powf(p.tau);
        let ik = Complex64::new(0.0, ka);
        for j in 0..m {
            let d = (ik + p.eigs[j]).norm();
            let mut l = vec![0; m];
            l[j] = 1;
            w2.offer(d / bound, d, k, &l);
        }
        for l in &ls {
            let la: Complex64 = l.iter().zip(&p.eigs).map(|(&x, &a)| a * x as f64).sum();
            let d = (ik + la).norm();
            w3.offer(d / bound, d, k, l);
        }
    });
    DiophantineReport { dio1: w1.report(kmax), dio2: Some(w2.report(kmax)), dio3: Some(w3.report(kmax)) }
}

/// `min_{0 < |k| <= kmax} |k alpha| |k|^tau`, the largest `gamma` passing the scan.
pub fn estimate_gamma(alpha: &[f64], tau: f64, kmax: usize) -> Result<f64, CohomologyError> {
    let mut best = f64::INFINITY;
    let mut hit: Option<Vec<i32>> = None;
    for_each_mode(alpha.len(), kmax.max(1), true, |k| {
        let d = small_divisor_1(k, alpha);
        if d < 1e-13 && hit.is_none() {
            hit = Some(k.to_vec());
        }
        best = best.min(d * l1(k).powf(tau));
    });
    match hit {
        Some(k) => Err(CohomologyError::ExactResonance { k }),
        None => Ok(best),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    #[test]
    fn mode_enumeration_counts() {
        let mut c = 0;
        for_each_mode(2, 3, false, |_| c += 1);
        // 2K^2 + 2K + 1 lattice points, minus the origin
        assert_eq!(c, 2 * 9 + 6);
        let mut h = 0;
        for_each_mode(2, 3, true, |k| {
            assert!(k.iter().find(|&&x| x != 0).unwrap() > &0);
            h += 1;
        });
        assert_eq!(h, 12);
    }

    #[test]
    fn half_fails_at_two() {
        let p = DiophantineParams { gamma: 0.1, tau: 1.0, alpha: vec![0.5], eigs: vec![] };
        let r = check_diophantine(&p, 5);
        assert!(!r.dio1.ok);
        assert_eq!(r.dio1.k, vec![2]);
        assert_eq!(r.dio1.worst_divisor, 0.0);
    }

    #[test]
    fn golden_passes_with_scanned_gamma() {
        let a = golden();
        let g = estimate_gamma(&[a], 2.0, 10_000).unwrap();
        // brute-force oracle
        let mut best = f64::INFINITY;
        for k in 1..=10_000i64 {
            let x = k as f64 * a;
            best = best.min((x - x.round()).abs() * (k * k) as f64);
        }
        assert_eq!(g, best);
        let p = DiophantineParams { gamma: g, tau: 2.0, alpha: vec![a], eigs: vec![] };
        assert!(check_diophantine(&p, 10_000).dio1.ok);
    }

    #[test]
    fn real_eigenvalue_divisor_at_least_eta() {
        let eta = 0.07;
        let p = DiophantineParams {
            gamma: 1e-3,
            tau: 1.0,
            alpha: vec![golden()],
            eigs: vec![Complex64::new(-eta, 0.0)],
        };
        let r = check_diophantine(&p, 200);
        assert!(r.dio2.unwrap().worst_divisor >= eta);
    }

    #[test]
    fn gamma_monotonicity() {
        let a = golden();
        let g1 = estimate_gamma(&[a], 1.0, 10).unwrap();
        let g2 = estimate_gamma(&[a], 1.0, 100).unwrap();
        assert!(g1 > 0.0 && g2 <= g1);
        let t1 = estimate_gamma(&[a, 1.0], 1.0, 30).unwrap();
        let t2 = estimate_gamma(&[a, 1.0], 2.5, 30).unwrap();
        assert!(t2 >= t1);
    }

    #[test]
    fn aligned_rational_component_is_resonant() {
        let e = estimate_gamma(&[golden(), 0.0], 1.0, 5);
        assert!(matches!(e, Err(CohomologyError::ExactResonance { .. })));
    }

    #[test]
    fn report_json_shape() {
        let p = DiophantineParams { gamma: 0.1, tau: 1.0, alpha: vec![golden()], eigs: vec![Complex64::new(-0.1, 0.0)] };
        let v = serde_json::to_value(check_diophantine(&p, 10)).unwrap();
        for c in ["dio1", "dio2", "dio3"] {
            for key in ["ok", "worst_divisor", "k", "l"] {
                assert!(v[c].get(key).is_some(), "{c}.{key}");
            }
        }
    }
}
