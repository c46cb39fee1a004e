use std::path::PathBuf;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use torusforge::cohomology::{check_diophantine, estimate_gamma, DiophantineParams};
use torusforge::fourier::VectorFieldJet;
use torusforge::geometry::Conjugacy;
use torusforge::linearize::CounterTerm;
use torusforge::newton::{
    eliminate_translation_twist, eliminate_twist_matrix, newton_solve, shift_actions, NewtonResult,
    Triple, Variant,
};
use torusforge::spinorbit::{
    eliminate_nu, sweep_surface, to_csv, translated_torus_normal_form, AttractorCurvePoint,
    SpinOrbitProblem,
};
use torusforge::verify::{
    conjugacy_residual, floquet_exponent, integrate_spin_orbit, rotation_number, IntegrateOptions,
};

use crate::config::{Elimination, RunConfig};
use crate::{field, CliError, Flags, Format};

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize to JSON")
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value") + "\n"
}

/// `Newton(Linearize(ClassViolation { .. }))` -> `Newton.Linearize.ClassViolation`.
fn error_kind<E: std::fmt::Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    let mut parts = Vec::new();
    let mut rest = dbg.as_str();
    loop {
        let end = rest
            .find(|c: char| !c.is_alphanumeric() && c != '_')
            .unwrap_or(rest.len());
        let ident = &rest[..end];
        if ident.is_empty() || !ident.starts_with(|c: char| c.is_ascii_uppercase()) {
            break;
        }
        parts.push(ident);
        match rest[end..].strip_prefix('(') {
            Some(r) => rest = r,
            None => break,
        }
    }
    if parts.is_empty() {
        "Error".into()
    } else {
        parts.join(".")
    }
}

struct Ctx<'a> {
    command: &'a str,
    echo: Value,
    flags: &'a Flags,
}

impl Ctx<'_> {
    fn document(&self, result: Value) -> Value {
        json!({ "command": self.command, "config": self.echo, "seed": self.flags.seed, "result": result })
    }

    fn failure<E: std::fmt::Debug + std::fmt::Display>(
        &self,
        e: &E,
        partial: Option<Value>,
    ) -> CliError {
        let mut doc = json!({
            "command": self.command,
            "config": self.echo,
            "seed": self.flags.seed,
            "error": { "kind": error_kind(e), "message": e.to_string() },
        });
        if let Some(p) = partial {
            doc["result"] = p;
        }
        CliError::Numerical {
            message: e.to_string(),
            document: doc,
        }
    }
}

pub fn check_dio(cfg: &RunConfig, flags: &Flags) -> Result<String, CliError> {
    let c = &cfg.check_dio;
    let ctx = Ctx {
        command: "check-dio",
        echo: json!({ "check_dio": c }),
        flags,
    };
    if c.alpha.is_empty() || !(c.tau > 0.0) {
        return Err(CliError::Usage(
            "check_dio: need a nonempty alpha and tau > 0".into(),
        ));
    }
    let estimate = estimate_gamma(&c.alpha, c.tau, c.kmax);
    let gamma = c
        .gamma
        .or(estimate.as_ref().ok().copied())
        .unwrap_or(f64::MIN_POSITIVE);
    let params = DiophantineParams {
        gamma,
        tau: c.tau,
        alpha: c.alpha.clone(),
        eigs: c
            .eigenvalues
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect(),
    };
    let report = check_diophantine(&params, c.kmax);
    let result = json!({
        "ok": report.ok() && estimate.is_ok(),
        "gamma": gamma,
        "gamma_estimate": estimate.as_ref().ok(),
        "report": report,
    });
    match estimate {
        Err(e) => Err(ctx.failure(&e, Some(result))),
        Ok(_) if !report.ok() => {
            let worst = [
                Some(&report.dio1),
                report.dio2.as_ref(),
                report.dio3.as_ref(),
            ]
            .into_iter()
            .flatten()
            .find(|r| !r.ok)
            .expect("a failing condition");
            let msg = format!(
                "Diophantine condition fails at k = {:?}, margin {:.3e}",
                worst.k, worst.margin
            );
            Err(ctx.failure(&DioFailure(msg), Some(result)))
        }
        Ok(_) => Ok(pretty(&ctx.document(result))),
    }
}

#[derive(Debug)]
struct DioFailure(String);

impl std::fmt::Display for DioFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn trace_of(r: &NewtonResult) -> Value {
    json!({ "tail_norms": r.tail_norms, "counter_terms": r.trace, "widths": r.widths })
}

pub fn solve(cfg: &RunConfig, flags: &Flags) -> Result<String, CliError> {
    let c = &cfg.solve;
    let ctx = Ctx {
        command: "solve",
        echo: json!({ "solve": c }),
        flags,
    };
    let (u0, v) = field::fields(c)?;
    let (result, target, elimination) = match c.elimination {
        Elimination::None => {
            let r = newton_solve(&c.variant, &v, &Triple::initial(&c.variant, &u0), &c.newton)
                .map_err(|e| ctx.failure(&e, None))?;
            (r, v, Value::Null)
        }
        Elimination::TwistMatrix => {
            if c.variant != Variant::Moser {
                return Err(CliError::Usage(
                    "twist_matrix elimination runs the moser variant".into(),
                ));
            }
            let tw =
                eliminate_twist_matrix(&v, &u0, &c.newton).map_err(|e| ctx.failure(&e, None))?;
            let extra =
                json!({ "a": tw.a, "outer_iters": tw.outer_iters, "eigen_gap": tw.eigen_gap });
            (tw.result, v, extra)
        }
        Elimination::TranslationTwist => {
            if c.variant != Variant::Moser {
                return Err(CliError::Usage(
                    "translation_twist elimination runs the moser variant".into(),
                ));
            }
            let tt = eliminate_translation_twist(&v, &u0, &c.newton)
                .map_err(|e| ctx.failure(&e, None))?;
            let shifted = shift_actions(&v, &tt.c).map_err(|e| ctx.failure(&e, None))?;
            let extra =
                json!({ "c": tt.c, "b": tt.b, "a": tt.twisted.a, "outer_iters": tt.outer_iters });
            (tt.twisted.result, shifted, extra)
        }
    };
    let x = &result.x;
    let conj = conjugacy_residual(&x.g, &x.u, &x.lambda, &target, c.samples, flags.seed);
    let mut out = json!({
        "variant": result.variant,
        "iterations": result.iterations(),
        "final_residual": result.final_residual(),
        "residuals": result.residuals,
        "certificate": result.certificate,
        "counter_term": x.lambda,
        "conjugacy_residual": conj,
        "elimination": elimination,
    });
    if flags.emit_torus {
        out["torus"] = json!({ "g": x.g, "u": x.u, "target": target });
    }
    if flags.trace {
        out["trace"] = trace_of(&result);
    }
    Ok(pretty(&ctx.document(out)))
}

pub fn spin_orbit(cfg: &RunConfig, flags: &Flags) -> Result<String, CliError> {
    let p = &cfg.spin_orbit;
    let ctx = Ctx {
        command: "spin-orbit",
        echo: json!({ "spin_orbit": p }),
        flags,
    };
    let mut pt = eliminate_nu(p).map_err(|e| ctx.failure(&e, None))?;
    let mut out = if flags.emit_torus {
        to_value(&pt)
    } else {
        pt.torus_embedding = None;
        to_value(&pt)
    };
    if flags.trace {
        // the root finder keeps only summaries; rerun the final solve for its history
        let nf = translated_torus_normal_form(&p.with_nu(pt.nu_star))
            .map_err(|e| ctx.failure(&e, None))?;
        out["trace"] = trace_of(&nf.result);
        out["trace"]["residuals"] = to_value(&nf.result.residuals);
    }
    Ok(pretty(&ctx.document(out)))
}

pub fn sweep(cfg: &RunConfig, flags: &Flags, format: Format) -> Result<String, CliError> {
    let p = &cfg.spin_orbit;
    let eta = if cfg.sweep.eta.is_empty() {
        vec![p.eta]
    } else {
        cfg.sweep.eta.clone()
    };
    let eps = if cfg.sweep.epsilon.is_empty() {
        vec![p.epsilon]
    } else {
        cfg.sweep.epsilon.clone()
    };
    let mut resolved = cfg.sweep.clone();
    resolved.eta = eta.clone();
    resolved.epsilon = eps.clone();
    let echo = json!({ "spin_orbit": p, "sweep": resolved });
    log::info!(
        "sweep of {} points on {} threads",
        eta.len() * eps.len(),
        flags.jobs.unwrap_or_else(rayon::current_num_threads)
    );
    let records = sweep_surface(p, &eps, &eta, flags.emit_torus);
    match format {
        Format::Json => {
            let ctx = Ctx {
                command: "spin-orbit --sweep",
                echo,
                flags,
            };
            Ok(pretty(&ctx.document(to_value(&records))))
        }
        Format::Csv => {
            let body = to_csv(&records).map_err(|e| CliError::Usage(e.to_string()))?;
            let echo = serde_json::to_string(&echo).expect("json value");
            Ok(format!(
                "# torusforge spin-orbit sweep\n# config {echo}\n{body}"
            ))
        }
    }
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Check {
            name,
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

fn field_of<T: serde::de::DeserializeOwned>(
    doc: &Value,
    path: &[&str],
    hint: &str,
) -> Result<T, CliError> {
    let mut node = doc;
    for key in path {
        node = node
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("input has no {}{hint}", path.join("."))))?;
    }
    serde_json::from_value(node.clone())
        .map_err(|e| CliError::Usage(format!("input {}: {e}", path.join("."))))
}

fn verify_spin_orbit(doc: &Value, cfg: &RunConfig, ctx: &Ctx) -> Result<Vec<Check>, CliError> {
    let vc = &cfg.verify;
    let p: SpinOrbitProblem = field_of(doc, &["config", "spin_orbit"], "")?;
    let pt: AttractorCurvePoint = field_of(doc, &["result"], "")?;
    let w = pt.torus_embedding.clone().ok_or_else(|| {
        CliError::Usage("input has no torus embedding; rerun spin-orbit with --emit-torus".into())
    })?;
    let pn = p.with_nu(pt.nu_star);

    let nf = translated_torus_normal_form(&pn).map_err(|e| ctx.failure(&e, None))?;
    let g = &nf.result.x.g;
    let coeff_drift = g.phi()[0]
        .coeffs()
        .iter()
        .zip(w.phi1.coeffs())
        .chain(
            g.r0()
                .iter()
                .zip(&w.r0)
                .flat_map(|(a, b)| a.coeffs().iter().zip(b.coeffs())),
        )
        .fold(0.0f64, |d, (a, b)| d.max((a - b).norm()));
    let drift = coeff_drift.max((nf.b.abs() - pt.residual).abs());

    let opts = IntegrateOptions {
        dt: vc.dt,
        stride: 10,
    };
    let (th, om) = w.point(0.0, 0.0);
    let verr = |e: torusforge::verify::VerifyError| ctx.failure(&e, None);
    let tr = integrate_spin_orbit(&pn, [th, om], 0.0, vc.rotation_time, &opts).map_err(verr)?;
    let rho = rotation_number(&tr, vc.transient_fraction).map_err(verr)?;

    // a repelling torus attracts backwards in time
    let t_end = if p.eta < 0.0 {
        -vc.floquet_time
    } else {
        vc.floquet_time
    };
    let fit = floquet_exponent(
        &pn,
        &w,
        vc.floquet_offset,
        t_end,
        &IntegrateOptions {
            dt: vc.dt,
            stride: 1,
        },
    )
    .map_err(verr)?;
    let expected = -p.eta.abs();
    Ok(vec![
        Check::at_most("recompute_drift", drift, vc.drift_tol),
        Check::at_most("b_residual", nf.b.abs(), p.root_tol),
        Check::at_most(
            "rotation_number_error",
            (rho.value - p.alpha).abs(),
            vc.rotation_tol,
        ),
        Check::at_most(
            "floquet_relative_error",
            ((fit.exponent - expected) / expected).abs(),
            vc.floquet_rel_tol,
        ),
        Check::at_most(
            "contraction_ratio",
            fit.final_distance / fit.initial_distance,
            1.0,
        ),
    ])
}

fn verify_solve(doc: &Value, cfg: &RunConfig, flags: &Flags) -> Result<Vec<Check>, CliError> {
    let vc = &cfg.verify;
    let hint = "; rerun solve with --emit-torus";
    let g: Conjugacy = field_of(doc, &["result", "torus", "g"], hint)?;
    let u: VectorFieldJet = field_of(doc, &["result", "torus", "u"], hint)?;
    let target: VectorFieldJet = field_of(doc, &["result", "torus", "target"], hint)?;
    let lambda: CounterTerm = field_of(doc, &["result", "counter_term"], "")?;
    let stored: f64 = field_of(doc, &["result", "final_residual"], "")?;
    let x = Triple { g, u, lambda };
    let w = x
        .residual_field(&target)
        .map_err(|e| CliError::Usage(format!("stored triple is inconsistent: {e}")))?;
    let recomputed = w.norm(0.0, 1.0) / target.norm(0.0, 1.0).max(f64::MIN_POSITIVE);
    let conj = conjugacy_residual(&x.g, &x.u, &x.lambda, &target, vc.samples, flags.seed);
    Ok(vec![
        Check::at_most("recompute_drift", (recomputed - stored).abs(), vc.drift_tol),
        Check::at_most("conjugacy_residual", conj, vc.conjugacy_tol),
    ])
}

#[derive(Debug)]
struct VerificationFailed(Vec<&'static str>);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "checks failed: {}", self.0.join(", "))
    }
}

pub fn verify(cfg: &RunConfig, flags: &Flags, input: Option<PathBuf>) -> Result<String, CliError> {
    let vc = &cfg.verify;
    let ctx = Ctx {
        command: "verify",
        echo: json!({ "verify": vc }),
        flags,
    };
    let path = input.or_else(|| vc.input.clone()).ok_or_else(|| {
        CliError::Usage("verify needs an input file (argument or verify.input)".into())
    })?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let source = doc
        .get("command")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let checks = match source.as_str() {
        "spin-orbit" => verify_spin_orbit(&doc, cfg, &ctx)?,
        "solve" => verify_solve(&doc, cfg, flags)?,
        other => {
            return Err(CliError::Usage(format!(
                "cannot verify output of {other:?}"
            )))
        }
    };
    let failed: Vec<&'static str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let report =
        json!({ "input": path, "source": source, "pass": failed.is_empty(), "checks": checks });
    if failed.is_empty() {
        Ok(pretty(&ctx.document(report)))
    } else {
        Err(ctx.failure(&VerificationFailed(failed), Some(report)))
    }
}
