//! Fields of the `solve` command: inline model plus Fourier terms, or JSON files.

use std::path::Path;

use torusforge::fourier::{Basis, FourierSeries, VectorFieldJet};

use crate::config::{Component, ModeTerm, SolveConfig};
use crate::CliError;

fn read_field(path: &Path) -> Result<VectorFieldJet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn unperturbed(c: &SolveConfig) -> Result<VectorFieldJet, CliError> {
    let model = &c.unperturbed;
    let (n, m) = (model.alpha.len(), model.a.len());
    if n == 0 || model.a.iter().any(|row| row.len() != m) {
        return Err(CliError::Usage(
            "solve.unperturbed: need n >= 1 and a square matrix a".into(),
        ));
    }
    let basis = Basis::get(n, c.order);
    let mut u = VectorFieldJet::linear_model(&basis, &model.alpha, &model.a);
    if let Some(t) = &model.torsion {
        if t.len() != n || t.iter().any(|row| row.len() != m) {
            return Err(CliError::Usage(format!(
                "solve.unperturbed.torsion must be {n} x {m}"
            )));
        }
        for (i, row) in t.iter().enumerate() {
            for (j, &q) in row.iter().enumerate() {
                let l = u.tangent[i].linear_term(j).constant_like(q);
                u.tangent[i].set_linear(j, l);
            }
        }
    }
    Ok(u)
}

fn add_term(v: &mut VectorFieldJet, t: &ModeTerm) -> Result<(), CliError> {
    let (n, m) = (v.n(), v.m());
    let order = v.basis().order();
    if t.k.len() != n {
        return Err(CliError::Usage(format!(
            "perturbation mode {:?} needs {n} entries",
            t.k
        )));
    }
    if t.k.iter().map(|x| x.unsigned_abs() as usize).sum::<usize>() > order {
        return Err(CliError::Usage(format!(
            "perturbation mode {:?} exceeds the order {order}",
            t.k
        )));
    }
    let comps = match t.component {
        Component::Tangent => &mut v.tangent,
        Component::Normal => &mut v.normal,
    };
    let jet = comps
        .get_mut(t.index)
        .ok_or_else(|| CliError::Usage(format!("perturbation index {} out of range", t.index)))?;
    if t.monomial.iter().any(|&j| j >= m) || t.monomial.len() > 2 {
        return Err(CliError::Usage(format!(
            "perturbation monomial {:?} is not of degree <= 2 in {m} actions",
            t.monomial
        )));
    }
    let f = &FourierSeries::cos_mode(n, order, &t.k, t.cos)
        + &FourierSeries::sin_mode(n, order, &t.k, t.sin);
    match t.monomial[..] {
        [] => {
            let s = jet.const_term() + &f;
            jet.set_const(s);
        }
        [j] => {
            let s = jet.linear_term(j) + &f;
            jet.set_linear(j, s);
        }
        [i, j] => {
            let s = jet.quad_term(i, j) + &f;
            jet.set_quad(i, j, s);
        }
        _ => unreachable!("checked above"),
    }
    Ok(())
}

/// `(u0, v)`: `u0` carries its frame, `v` does not.
pub fn fields(c: &SolveConfig) -> Result<(VectorFieldJet, VectorFieldJet), CliError> {
    let u0 = match &c.u0_file {
        Some(p) => read_field(p)?,
        None => unperturbed(c)?,
    };
    if u0.frame.is_none() {
        return Err(CliError::Usage(
            "the unperturbed field needs a frame (alpha, A)".into(),
        ));
    }
    let mut v = match &c.v_file {
        Some(p) => read_field(p)?,
        None => u0.clone(),
    };
    for t in &c.perturbation {
        add_term(&mut v, t)?;
    }
    if v.n() != u0.n() || v.m() != u0.m() || v.basis().order() != u0.basis().order() {
        return Err(CliError::Usage("u0 and v have different shapes".into()));
    }
    v.frame = None;
    Ok((u0, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelConfig, GOLDEN};

    fn cfg() -> SolveConfig {
        SolveConfig {
            unperturbed: ModelConfig {
                alpha: vec![GOLDEN],
                a: vec![vec![-0.5]],
                torsion: Some(vec![vec![1.0]]),
            },
            order: 8,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn model_has_torsion_and_frame() {
        let (u0, v) = fields(&cfg()).unwrap();
        assert_eq!(u0.tangent[0].linear_term(0).average(), 1.0);
        assert_eq!(u0.normal[0].linear_term(0).average(), -0.5);
        assert!(u0.frame.is_some() && v.frame.is_none());
    }

    #[test]
    fn terms_land_on_their_monomials() {
        let mut c = cfg();
        c.perturbation = vec![
            ModeTerm {
                component: Component::Normal,
                index: 0,
                monomial: vec![],
                k: vec![1],
                cos: 0.0,
                sin: 1e-3,
            },
            ModeTerm {
                component: Component::Tangent,
                index: 0,
                monomial: vec![0, 0],
                k: vec![2],
                cos: 2e-3,
                sin: 0.0,
            },
        ];
        let (u0, v) = fields(&c).unwrap();
        let d = v.sub(&u0).unwrap();
        assert_eq!(
            d.normal[0].const_term(),
            &FourierSeries::sin_mode(1, 8, &[1], 1e-3)
        );
        assert_eq!(
            d.tangent[0].quad_term(0, 0),
            &FourierSeries::cos_mode(1, 8, &[2], 2e-3)
        );
        assert_eq!(d.tangent[0].const_term().l1(), 0.0);
    }

    #[test]
    fn bad_terms_are_usage_errors() {
        for t in [
            ModeTerm {
                component: Component::Normal,
                index: 1,
                monomial: vec![],
                k: vec![1],
                cos: 1.0,
                sin: 0.0,
            },
            ModeTerm {
                component: Component::Normal,
                index: 0,
                monomial: vec![1],
                k: vec![1],
                cos: 1.0,
                sin: 0.0,
            },
            ModeTerm {
                component: Component::Normal,
                index: 0,
                monomial: vec![],
                k: vec![1, 0],
                cos: 1.0,
                sin: 0.0,
            },
            ModeTerm {
                component: Component::Normal,
                index: 0,
                monomial: vec![],
                k: vec![9],
                cos: 1.0,
                sin: 0.0,
            },
        ] {
            let mut c = cfg();
            c.perturbation = vec![t];
            assert!(matches!(fields(&c), Err(CliError::Usage(_))));
        }
    }
}
