use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torusforge"))
        .args(args)
        .env("TORUSFORGE_LOG", "off")
        .output()
        .expect("spawn torusforge")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: [&str; 2] = ["--set", "spin_orbit.order=16"];

#[test]
fn resonant_frequency_exits_2_with_report() {
    let out = run(&["check-dio", "--set", "check_dio.alpha=[0.5]"]);
    assert_eq!(out.status.code(), Some(2));
    let d = json(&out);
    assert_eq!(d["command"], "check-dio");
    assert_eq!(d["error"]["kind"], "ExactResonance");
    assert_eq!(d["result"]["report"]["dio1"]["k"], serde_json::json!([2]));
    assert_eq!(d["result"]["ok"], false);
}

#[test]
fn golden_mean_passes() {
    let out = run(&["check-dio"]);
    assert_eq!(out.status.code(), Some(0));
    let d = json(&out);
    assert_eq!(d["result"]["ok"], true);
    let g = d["result"]["gamma"].as_f64().unwrap();
    assert!((g - 0.381_966_011_250_105).abs() < 1e-12, "gamma {g}");
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        vec!["spin-orbit", "--set", "spin_orbit.etta=0.1"],
        vec!["spin-orbit", "--set", "nonsense.x=1"],
        vec!["solve", "--config", "/nonexistent/run.toml"],
        vec!["spin-orbit", "--jobs", "0"],
        vec!["bogus-subcommand"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn help_exits_0() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["check-dio", "solve", "spin-orbit", "verify"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn unperturbed_sweep_returns_alpha() {
    let out = run(&[
        "spin-orbit",
        "--sweep",
        "--set",
        "sweep.epsilon=[0]",
        "--set",
        "sweep.eta=[0.05, 0.1, 0.2]",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "eta,epsilon,nu_star,b_residual,newton_iters,certificate_exponent,status"
    );
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let f: Vec<_> = row.split(',').collect();
        let nu: f64 = f[2].parse().unwrap();
        assert!((nu - 0.618_033_988_749_894_9).abs() < 1e-15, "{row}");
        assert_eq!(f[6], "converged");
    }
}

#[test]
fn sweep_does_not_depend_on_jobs() {
    let base = [
        "spin-orbit",
        "--sweep",
        "--format",
        "json",
        "--set",
        "spin_orbit.order=16",
        "--set",
        "sweep.epsilon=[0, 5e-4, 1e-3]",
        "--set",
        "sweep.eta=[0.1, -0.1]",
    ];
    let one = run(&[&base[..], &["--jobs", "1"]].concat());
    let four = run(&[&base[..], &["--jobs", "4"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let d = json(&one);
    assert_eq!(d["command"], "spin-orbit --sweep");
}

#[test]
fn solve_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
[solve]
order = 12
[solve.unperturbed]
alpha = [0.6180339887498949]
a = [[-0.5]]
[[solve.perturbation]]
component = "normal"
index = 0
k = [1]
sin = 1e-3
[[solve.perturbation]]
component = "tangent"
index = 0
monomial = [0]
k = [2]
cos = 1e-3
"#,
    )
    .unwrap();
    let result = dir.path().join("solve.json");
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--emit-torus",
        "--trace",
        "-o",
        result.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let d = read_json(&result);
    assert!(d["result"]["final_residual"].as_f64().unwrap() < 1e-11);
    assert!(d["result"]["torus"].is_object());
    assert!(d["result"]["trace"].is_object());
    assert_eq!(d["config"]["solve"]["order"], 12);

    let out = run(&["verify", result.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["pass"], true);
    assert_eq!(v["result"]["source"], "solve");
}

#[test]
fn verify_rejects_a_tampered_result() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("solve.json");
    let out = run(&[
        "solve",
        "--set",
        "solve.order=10",
        "--set",
        r#"solve.perturbation=[{component="normal", index=0, k=[1], cos=1e-3}]"#,
        "--emit-torus",
        "-o",
        result.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mut d = read_json(&result);
    d["result"]["final_residual"] = Value::from(1e-3);
    std::fs::write(&result, serde_json::to_string(&d).unwrap()).unwrap();
    let out = run(&["verify", result.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "VerificationFailed");
}

#[test]
fn verify_without_torus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("solve.json");
    let out = run(&[
        "solve",
        "--set",
        "solve.order=8",
        "-o",
        result.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        run(&["verify", result.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn spin_orbit_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("so.json");
    let out = run(&[
        &SMALL[..],
        &["spin-orbit", "--emit-torus", "-o", result.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(out.status.code(), Some(0));
    let d = read_json(&result);
    let nu = d["result"]["nu_star"].as_f64().unwrap();
    assert!((nu - 0.618_033_988_749_894_9).abs() < 1e-4, "nu* {nu}");

    let out = run(&[&SMALL[..], &["verify", result.to_str().unwrap()]].concat());
    let v = json(&out);
    assert_eq!(out.status.code(), Some(0), "{v:#}");
    assert_eq!(v["result"]["source"], "spin-orbit");
}

#[test]
fn truncation_too_coarse_exits_2() {
    let out = run(&["spin-orbit", "--set", "spin_orbit.order=12"]);
    assert_eq!(out.status.code(), Some(2));
    let d = json(&out);
    assert_eq!(d["error"]["kind"], "Newton.TailBlowup");
}
