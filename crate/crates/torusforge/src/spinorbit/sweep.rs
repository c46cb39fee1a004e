use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eliminate_nu, AttractorCurvePoint, SpinOrbitError, SpinOrbitProblem};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PointOutcome {
    Converged(AttractorCurvePoint),
    StructurallyExcluded,
    Failed { error: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eta: f64,
    pub epsilon: f64,
    pub outcome: PointOutcome,
}

fn solve_point(base: &SpinOrbitProblem, eta: f64, epsilon: f64, emit_torus: bool) -> SweepRecord {
    let p = SpinOrbitProblem { eta, epsilon, nu: base.alpha, ..base.clone() };
    let outcome = match eliminate_nu(&p) {
        Ok(mut pt) => {
            if !emit_torus {
                pt.torus_embedding = None;
            }
            PointOutcome::Converged(pt)
        }
        Err(SpinOrbitError::StructurallyExcluded { .. }) => PointOutcome::StructurallyExcluded,
        Err(e) => {
            log::warn!("eta {eta}, eps {epsilon}: {e}");
            PointOutcome::Failed { error: e.to_string() }
        }
    };
    SweepRecord { eta, epsilon, outcome }
}

/// `nu*(eta)` at the `epsilon` of `base`, one record per grid value in grid order.
/// Runs on the current rayon pool.
pub fn sweep_curve(base: &SpinOrbitProblem, eta_grid: &[f64], emit_torus: bool) -> Vec<SweepRecord> {
    sweep_surface(base, &[base.epsilon], eta_grid, emit_torus)
}

/// `nu*(eta, epsilon)`, epsilon-major.
pub fn sweep_surface(
    base: &SpinOrbitProblem,
    epsilon_grid: &[f64],
    eta_grid: &[f64],
    emit_torus: bool,
) -> Vec<SweepRecord> {
    let points: Vec<(f64, f64)> = epsilon_grid.iter().flat_map(|&e| eta_grid.iter().map(move |&h| (h, e))).collect();
    points.par_iter().map(|&(eta, eps)| solve_point(base, eta, eps, emit_torus)).collect()
}

#[derive(Serialize)]
struct CsvRow {
    eta: f64,
    epsilon: f64,
    nu_star: Option<f64>,
    b_residual: Option<f64>,
    newton_iters: Option<usize>,
    certificate_exponent: Option<f64>,
    status: &'static str,
}

/// One CSV row per record; numeric cells are empty for points that did not converge.
pub fn to_csv(records: &[SweepRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        let mut row = CsvRow {
            eta: r.eta,
            epsilon: r.epsilon,
            nu_star: None,
            b_residual: None,
            newton_iters: None,
            certificate_exponent: None,
            status: "failed",
        };
        match &r.outcome {
            PointOutcome::Converged(p) => {
                row.nu_star = Some(p.nu_star);
                row.b_residual = Some(p.residual);
                row.newton_iters = Some(p.newton_iters);
                row.certificate_exponent = p.certificate_exponent;
                row.status = "converged";
            }
            PointOutcome::StructurallyExcluded => row.status = "structurally_excluded",
            PointOutcome::Failed { .. } => {}
        }
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
