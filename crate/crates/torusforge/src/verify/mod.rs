//! Brute-force checks that share nothing with the spectral pipeline except
//! pointwise evaluation of stored series: RK4 integration of the spin-orbit
//! equation and of jets, rotation numbers, Floquet exponents and the
//! conjugacy residual `g' u - (v - lambda) o g` on random samples.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::VectorFieldJet;
use crate::geometry::Conjugacy;
use crate::linearize::CounterTerm;
use crate::spinorbit::{SpinOrbitProblem, TorusEmbedding};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("integration blew up at t = {t} (|state| = {size:.3e}); reduce the step")]
    StepTooLarge { t: f64, size: f64 },
    #[error("averaging window {span:.3e} is shorter than {needed:.3e}")]
    WindowTooShort { span: f64, needed: f64 },
    #[error("distance {distance:.3e} at t = {t} left the neighborhood {limit:.3e}")]
    EscapedNeighborhood { t: f64, distance: f64, limit: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Sampled solution of the spin-orbit equation with the angle on the universal cover.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    /// Signed RK4 step.
    pub dt: f64,
    pub scheme: String,
}

impl Trajectory {
    /// `t, theta mod 2 pi, theta, theta'` per sample.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "theta_mod_2pi", "theta", "theta_dot"])?;
        for i in 0..self.times.len() {
            let th = self.theta[i];
            w.serialize((self.times[i], th.rem_euclid(2.0 * PI), th, self.theta_dot[i]))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateOptions {
    /// Step size (its sign is taken from the direction of integration).
    pub dt: f64,
    /// Keep every `stride`-th state.
    pub stride: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { dt: 0.01, stride: 1 }
    }
}

const BLOWUP: f64 = 1e8;

fn rk4_step<const N: usize>(f: &impl Fn(f64, &[f64; N]) -> [f64; N], t: f64, x: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + s * k[i]) };
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &add(x, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &add(x, &k2, 0.5 * h));
    let k4 = f(t + h, &add(x, &k3, h));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// RK4 for `theta'' + eta (theta' - nu) + eps d_theta f(theta, t) = 0` from
/// `x0 = (theta, theta')` at `t0` to `t_end` (either direction).
pub fn integrate_spin_orbit(
    p: &SpinOrbitProblem,
    x0: [f64; 2],
    t0: f64,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, VerifyError> {
    if !(opts.dt > 0.0) || opts.stride == 0 {
        return Err(VerifyError::InvalidInput(format!("dt {} and stride {} must be positive", opts.dt, opts.stride)));
    }
    let span = t_end - t0;
    let steps = (span.abs() / opts.dt).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let rhs = |t: f64, x: &[f64; 2]| -> [f64; 2] {
        let (_, d1, _) = p.potential_eval(x[0], t);
        [x[1], -p.eta * (x[1] - p.nu) - p.epsilon * d1]
    };
    let cap = steps / opts.stride + 2;
    let mut tr = Trajectory {
        times: Vec::with_capacity(cap),
        theta: Vec::with_capacity(cap),
        theta_dot: Vec::with_capacity(cap),
        dt: h,
        scheme: "rk4".into(),
    };
    let mut x = x0;
    tr.times.push(t0);
    tr.theta.push(x[0]);
    tr.theta_dot.push(x[1]);
    for s in 1..=steps {
        let t = t0 + (s - 1) as f64 * h;
        x = rk4_step(&rhs, t, &x, h);
        let size = x[0].abs().max(x[1].abs());
        if !(size < BLOWUP) {
            return Err(VerifyError::StepTooLarge { t: t + h, size });
        }
        if s % opts.stride == 0 || s == steps {
            tr.times.push(t0 + s as f64 * h);
            tr.theta.push(x[0]);
            tr.theta_dot.push(x[1]);
        }
    }
    Ok(tr)
}

/// RK4 for a jet field on `T^n x R^m`, returning `(theta, r)` at `t_end`.
pub fn integrate_field(
    v: &VectorFieldJet,
    theta0: &[f64],
    r0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>), VerifyError> {
    let (n, m) = (v.n(), v.m());
    if theta0.len() != n || r0.len() != m || !(dt > 0.0) {
        return Err(VerifyError::InvalidInput("state shape or step".into()));
    }
    let steps = (t_end.abs() / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let f = |x: &[f64]| -> Vec<f64> {
        let (a, b) = v.eval(&x[..n], &x[n..]);
        a.into_iter().chain(b).collect()
    };
    let mut x: Vec<f64> = theta0.iter().chain(r0).cloned().collect();
    for s in 0..steps {
        let k1 = f(&x);
        let y: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = f(&y);
        let y: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = f(&y);
        let y: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = f(&y);
        for i in 0..n + m {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let size = x.iter().fold(0.0f64, |s, a| s.max(a.abs()));
        if !(size < BLOWUP) {
            return Err(VerifyError::StepTooLarge { t: (s + 1) as f64 * h, size });
        }
    }
    let r = x.split_off(n);
    Ok((x, r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationNumber {
    pub value: f64,
    /// Difference between the two halves of the window.
    pub error: f64,
    pub window: f64,
}

/// Forcing periods the averaging window must span.
pub const MIN_PERIODS: f64 = 100.0;

fn index_at(times: &[f64], t: f64) -> usize {
    let forward = times[times.len() - 1] >= times[0];
    let i = times.partition_point(|&s| if forward { s < t } else { s > t });
    i.min(times.len() - 1)
}

/// `(theta(T) - theta(T0)) / (T - T0)` after dropping the first `transient_fraction` of the run.
pub fn rotation_number(tr: &Trajectory, transient_fraction: f64) -> Result<RotationNumber, VerifyError> {
    if tr.times.len() < 3 || !(0.0..1.0).contains(&transient_fraction) {
        return Err(VerifyError::InvalidInput("need 3 samples and a transient fraction in [0, 1)".into()));
    }
    let t_first = tr.times[0];
    let t_last = *tr.times.last().unwrap();
    let t0 = t_first + transient_fraction * (t_last - t_first);
    let needed = MIN_PERIODS * 2.0 * PI;
    let span = (t_last - t0).abs();
    if span < needed {
        return Err(VerifyError::WindowTooShort { span, needed });
    }
    let i0 = index_at(&tr.times, t0);
    let i2 = tr.times.len() - 1;
    let i1 = (i0 + i2) / 2;
    let rate = |a: usize, b: usize| (tr.theta[b] - tr.theta[a]) / (tr.times[b] - tr.times[a]);
    Ok(RotationNumber { value: rate(i0, i2), error: (rate(i0, i1) - rate(i1, i2)).abs(), window: span })
}

/// Points of the torus section at time `t` used for the coarse distance search.
pub const SECTION_POINTS: usize = 512;

fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(2.0 * PI) - PI
}

/// Distance from `(theta, theta')` at time `t` to the section of the torus:
/// coarse minimum over [`SECTION_POINTS`] torus points, then golden-section refinement.
pub fn distance_to_torus(w: &TorusEmbedding, t: f64, theta: f64, theta_dot: f64) -> f64 {
    let d = |psi: f64| {
        let (a, r) = w.point(psi, t);
        angle_diff(theta, a).hypot(theta_dot - r)
    };
    let h = 2.0 * PI / SECTION_POINTS as f64;
    let (mut best, mut bj) = (f64::INFINITY, 0);
    for j in 0..SECTION_POINTS {
        let x = d(j as f64 * h);
        if x < best {
            best = x;
            bj = j;
        }
    }
    let (mut a, mut b) = ((bj as f64 - 1.0) * h, (bj as f64 + 1.0) * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (d(c), d(e));
    for _ in 0..80 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = d(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = d(e);
        }
    }
    best.min(fc).min(fe)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FloquetFit {
    /// Slope of `log distance` against elapsed time `|t - t0|`.
    pub exponent: f64,
    pub samples: Vec<(f64, f64)>,
    pub initial_distance: f64,
    pub final_distance: f64,
}

/// Sampling interval of the distance along the trajectory.
const FLOQUET_SAMPLE: f64 = 0.5;
/// Distances below this are rounding noise and left out of the fit.
const DISTANCE_FLOOR: f64 = 1e-11;

/// Start `offset` above the torus point at `(psi, t) = (0, 0)` in the `theta'`
/// direction, integrate to `t_end` (negative values integrate backwards) and fit
/// the contraction rate of the distance to the torus.
pub fn floquet_exponent(
    p: &SpinOrbitProblem,
    w: &TorusEmbedding,
    offset: f64,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<FloquetFit, VerifyError> {
    if !(offset > 0.0) || t_end == 0.0 {
        return Err(VerifyError::InvalidInput("offset must be positive and t_end nonzero".into()));
    }
    let (th0, r0) = w.point(0.0, 0.0);
    let stride = ((FLOQUET_SAMPLE / opts.dt).round() as usize).max(1);
    let tr = integrate_spin_orbit(p, [th0, r0 + offset], 0.0, t_end, &IntegrateOptions { stride, ..*opts })?;
    let limit = 10.0 * offset;
    let mut samples = Vec::with_capacity(tr.times.len());
    for i in 0..tr.times.len() {
        let t = tr.times[i];
        let dist = distance_to_torus(w, t, tr.theta[i], tr.theta_dot[i]);
        if dist > limit {
            return Err(VerifyError::EscapedNeighborhood { t, distance: dist, limit });
        }
        samples.push((t.abs(), dist));
    }
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.1 > DISTANCE_FLOOR).map(|&(t, d)| (t, d.ln())).collect();
    if pts.len() < 3 {
        return Err(VerifyError::InvalidInput("fewer than 3 distances above the rounding floor".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let md = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let std: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
    Ok(FloquetFit {
        exponent: std / stt,
        initial_distance: samples[0].1,
        final_distance: samples.last().unwrap().1,
        samples,
    })
}

/// Radius of the action samples of [`conjugacy_residual`].
pub const SAMPLE_RADIUS: f64 = 0.05;

/// `max |g'(x) u(x) - (v - lambda)(g(x))|` over `samples` random points with
/// `|r_i| <= 0.05`, drawn from a seeded generator.
pub fn conjugacy_residual(
    g: &Conjugacy,
    u: &VectorFieldJet,
    lambda: &CounterTerm,
    v: &VectorFieldJet,
    samples: usize,
    seed: u64,
) -> f64 {
    let (n, m) = (g.n(), g.m());
    let d = n + m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let r: Vec<f64> = (0..m).map(|_| rng.gen_range(-SAMPLE_RADIUS..=SAMPLE_RADIUS)).collect();
        let (ut, un) = u.eval(&theta, &r);
        let ux: Vec<f64> = ut.into_iter().chain(un).collect();
        let jac = g.jacobian(&theta, &r);
        let (gt, gr) = g.eval(&theta, &r);
        let (vt, vn) = v.eval(&gt, &gr);
        for i in 0..d {
            let lhs: f64 = (0..d).map(|j| jac[i * d + j] * ux[j]).sum();
            let rhs = if i < n {
                vt[i] - lambda.beta[i]
            } else {
                let k = i - n;
                vn[k] - lambda.b[k] - (0..m).map(|j| lambda.bmat[k][j] * gr[j]).sum::<f64>()
            };
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests;
