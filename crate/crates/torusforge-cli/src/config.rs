//! Run configuration: one TOML file with a section per command.
//!
//! The file is merged over the serialized defaults, then `--set key=value`
//! overrides are applied, and the result is deserialized with unknown keys
//! rejected. The resolved form is what gets echoed into outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use torusforge::newton::{NewtonConfig, Variant};
use torusforge::spinorbit::SpinOrbitProblem;

use crate::CliError;

pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub check_dio: CheckDioConfig,
    pub solve: SolveConfig,
    pub spin_orbit: SpinOrbitProblem,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            check_dio: CheckDioConfig::default(),
            solve: SolveConfig::default(),
            spin_orbit: SpinOrbitProblem::new(GOLDEN, 0.1, GOLDEN, 1e-3),
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDioConfig {
    pub alpha: Vec<f64>,
    pub tau: f64,
    /// Omitted: the largest `gamma` passing the scan is used.
    pub gamma: Option<f64>,
    pub kmax: usize,
    /// Real normal eigenvalues; their conditions are scanned when nonempty.
    pub eigenvalues: Vec<f64>,
}

impl Default for CheckDioConfig {
    fn default() -> Self {
        CheckDioConfig {
            alpha: vec![GOLDEN],
            tau: 2.0,
            gamma: None,
            kmax: 100,
            eigenvalues: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elimination {
    None,
    TwistMatrix,
    TranslationTwist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Tangent,
    Normal,
}

/// `cos cos(k.theta) + sin sin(k.theta)` times the action monomial `r^monomial`,
/// added to one component of the field.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTerm {
    pub component: Component,
    pub index: usize,
    /// Action indices: `[]` constant, `[j]` for `r_j`, `[i, j]` for `r_i r_j`.
    #[serde(default)]
    pub monomial: Vec<usize>,
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `u0 = (alpha + torsion r, a r)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub torsion: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub variant: Variant,
    pub elimination: Elimination,
    pub order: usize,
    pub unperturbed: ModelConfig,
    /// Terms added to `u0` to form the target `v`.
    pub perturbation: Vec<ModeTerm>,
    /// JSON field files replacing the inline model and target.
    pub u0_file: Option<PathBuf>,
    pub v_file: Option<PathBuf>,
    /// Random points of the pointwise conjugacy check.
    pub samples: usize,
    pub newton: NewtonConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            variant: Variant::Moser,
            elimination: Elimination::None,
            order: 16,
            unperturbed: ModelConfig {
                alpha: vec![GOLDEN],
                a: vec![vec![-0.5]],
                torsion: None,
            },
            perturbation: Vec::new(),
            u0_file: None,
            v_file: None,
            samples: 500,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eta: Vec<f64>,
    /// Empty: the `epsilon` of the spin-orbit problem.
    pub epsilon: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Output of `solve --emit-torus` or `spin-orbit --emit-torus`.
    pub input: Option<PathBuf>,
    pub samples: usize,
    pub dt: f64,
    pub rotation_time: f64,
    pub transient_fraction: f64,
    pub floquet_offset: f64,
    pub floquet_time: f64,
    pub rotation_tol: f64,
    pub floquet_rel_tol: f64,
    pub conjugacy_tol: f64,
    pub drift_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            input: None,
            samples: 500,
            dt: 0.01,
            rotation_time: 20_000.0,
            transient_fraction: 0.05,
            floquet_offset: 1e-3,
            floquet_time: 80.0,
            rotation_tol: 1e-6,
            floquet_rel_tol: 0.1,
            conjugacy_tol: 1e-8,
            drift_tol: 1e-12,
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value` with `value` read as a TOML value, or as a string if it is not one.
fn apply_set(root: &mut toml::Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
    let value = toml::from_str::<toml::Table>(&format!("x = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {path}: {key} is not a table")))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| CliError::Usage(format!("--set {path}: parent is not a table")))?;
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut root =
        toml::Value::try_from(RunConfig::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        let file: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        merge(&mut root, toml::Value::Table(file));
    }
    for s in sets {
        apply_set(&mut root, s)?;
    }
    root.try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid configuration: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn defaults_round_trip() {
        let c = load(None, &[]).unwrap();
        assert_eq!(c.spin_orbit.order, 20);
        assert_eq!(c.solve.variant, Variant::Moser);
        assert_eq!(c.verify.samples, 500);
    }

    #[test]
    fn file_keys_merge_over_defaults() {
        let f = write("[spin_orbit]\neta = -0.3\n[spin_orbit.newton]\nmax_iters = 12\n");
        let c = load(Some(f.path()), &[]).unwrap();
        assert_eq!(c.spin_orbit.eta, -0.3);
        assert_eq!(c.spin_orbit.newton.max_iters, 12);
        assert_eq!(
            c.spin_orbit.newton.residual_tol,
            NewtonConfig::default().residual_tol
        );
        assert_eq!(c.spin_orbit.alpha, GOLDEN);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write("[spin_orbit]\netta = 0.1\n");
        assert!(matches!(load(Some(f.path()), &[]), Err(CliError::Usage(_))));
        let f = write("[nonsense]\nx = 1\n");
        assert!(matches!(load(Some(f.path()), &[]), Err(CliError::Usage(_))));
    }

    #[test]
    fn set_overrides_file() {
        let f = write("[spin_orbit]\neta = -0.3\n");
        let sets = vec![
            "spin_orbit.eta=0.05".to_string(),
            "sweep.eta=[0.1, 0.2]".to_string(),
            "spin_orbit.order=12".to_string(),
        ];
        let c = load(Some(f.path()), &sets).unwrap();
        assert_eq!(c.spin_orbit.eta, 0.05);
        assert_eq!(c.sweep.eta, vec![0.1, 0.2]);
        assert_eq!(c.spin_orbit.order, 12);
        // integers are accepted for floats
        let c = load(None, &["spin_orbit.epsilon=0".to_string()]).unwrap();
        assert_eq!(c.spin_orbit.epsilon, 0.0);
    }

    #[test]
    fn bad_set_is_a_usage_error() {
        assert!(matches!(
            load(None, &["no_equals".to_string()]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            load(None, &["spin_orbit.eta.x=1".to_string()]),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn variant_and_perturbation_parse() {
        let f = write(
            r#"
[solve]
variant = { kind = "russmann", free = [true] }
elimination = "twist_matrix"
[[solve.perturbation]]
component = "normal"
index = 0
monomial = [0]
k = [1]
cos = 1e-3
"#,
        );
        let c = load(Some(f.path()), &[]).unwrap();
        assert_eq!(c.solve.variant, Variant::Russmann { free: vec![true] });
        assert_eq!(c.solve.elimination, Elimination::TwistMatrix);
        assert_eq!(c.solve.perturbation[0].monomial, vec![0]);
    }
}
