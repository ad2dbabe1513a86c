//! JSON file formats: template bases, initial policies, and direct bounds.
//! All carry a `"format": 1` field.

use super::FrontendError;
use crate::domain::{ExtReal, Row};
use crate::ir::{CoordinateKind, EquationSystem};
use crate::linalg::Mat;
use crate::quadforms::QuadraticForm;
use crate::relax::{Policy, PolicyEntry};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A loaded template basis: the program variables it is expressed over and
/// one named quadratic form per template.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    pub dim: usize,
    pub vars: Vec<String>,
    pub names: Vec<String>,
    pub forms: Vec<QuadraticForm>,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    format: u32,
    dim: usize,
    vars: Vec<String>,
    templates: Vec<TemplateSpec>,
}

#[derive(Serialize, Deserialize)]
struct TemplateSpec {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    c: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

pub fn parse_templates(text: &str) -> Result<TemplateSet, FrontendError> {
    let file: TemplateFile =
        serde_json::from_str(text).map_err(|e| FrontendError::Format(e.to_string()))?;
    if file.format != 1 {
        return Err(FrontendError::Format(format!("unsupported format {}", file.format)));
    }
    let d = file.dim;
    if file.vars.len() != d {
        return Err(FrontendError::Format(format!(
            "{} variable names for dimension {d}",
            file.vars.len()
        )));
    }
    if file.templates.is_empty() {
        return Err(FrontendError::Format("template basis must be non-empty".into()));
    }
    let mut names = Vec::new();
    let mut forms = Vec::new();
    for spec in &file.templates {
        let a = match &spec.a {
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(FrontendError::Format(format!(
                        "template {:?}: quadratic part is not {d}x{d}",
                        spec.name
                    )));
                }
                Mat::from_rows(rows)
            }
            None => Mat::zeros(d, d),
        };
        let b = match &spec.b {
            Some(b) => {
                if b.len() != d {
                    return Err(FrontendError::Format(format!(
                        "template {:?}: linear part has length {}",
                        spec.name,
                        b.len()
                    )));
                }
                b.clone()
            }
            None => vec![0.0; d],
        };
        names.push(spec.name.clone());
        forms.push(QuadraticForm::new(a, b, spec.c));
    }
    Ok(TemplateSet { dim: d, vars: file.vars, names, forms })
}

pub fn write_templates(set: &TemplateSet) -> String {
    let specs: Vec<TemplateSpec> = set
        .names
        .iter()
        .zip(&set.forms)
        .map(|(name, f)| {
            let a_zero = f.is_linear();
            let b_zero = f.b().iter().all(|&v| v == 0.0);
            TemplateSpec {
                name: name.clone(),
                a: if a_zero {
                    None
                } else {
                    Some(
                        (0..f.dim())
                            .map(|i| (0..f.dim()).map(|j| f.a().get(i, j)).collect())
                            .collect(),
                    )
                },
                b: if b_zero { None } else { Some(f.b().to_vec()) },
                c: f.c(),
            }
        })
        .collect();
    let file = TemplateFile {
        format: 1,
        dim: set.dim,
        vars: set.vars.clone(),
        templates: specs,
    };
    serde_json::to_string_pretty(&file).expect("template serialization")
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: u32,
    /// 1-based coordinate -> template name -> multipliers.
    coords: BTreeMap<String, BTreeMap<String, PolicyEntrySpec>>,
}

#[derive(Serialize, Deserialize)]
struct PolicyEntrySpec {
    lambda: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
}

/// Load a policy file against a system: every transfer coordinate must be
/// covered, multipliers must be nonnegative, and `mu` may only appear on
/// test coordinates.
pub fn parse_policy(text: &str, sys: &EquationSystem) -> Result<Policy, FrontendError> {
    let file: PolicyFile =
        serde_json::from_str(text).map_err(|e| FrontendError::Format(e.to_string()))?;
    if file.format != 1 {
        return Err(FrontendError::Format(format!("unsupported format {}", file.format)));
    }
    let width = sys.template_count();
    let name_index: BTreeMap<&str, usize> = sys
        .template_names()
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut entries: Vec<Option<Vec<PolicyEntry>>> = vec![None; sys.len()];
    for (i, coord) in sys.coords().iter().enumerate() {
        let is_test = matches!(coord, CoordinateKind::Test { .. });
        if !coord.is_transfer() {
            continue;
        }
        let key = (i + 1).to_string();
        let specs = file.coords.get(&key).ok_or_else(|| {
            FrontendError::Format(format!("policy file misses coordinate {key}"))
        })?;
        let mut coord_entries = Vec::with_capacity(width);
        for name in sys.template_names() {
            let spec = specs.get(name).ok_or_else(|| {
                FrontendError::Format(format!(
                    "policy file misses template {name:?} at coordinate {key}"
                ))
            })?;
            let mut entry = PolicyEntry::zero(width, is_test);
            for (qname, &w) in &spec.lambda {
                let qi = name_index.get(qname.as_str()).ok_or_else(|| {
                    FrontendError::Format(format!("unknown template {qname:?} in policy"))
                })?;
                if w < 0.0 {
                    return Err(FrontendError::Format(format!(
                        "negative multiplier for {qname:?} at coordinate {key}"
                    )));
                }
                entry.lambda[*qi] = w;
            }
            match (is_test, spec.mu) {
                (true, Some(mu)) if mu < 0.0 => {
                    return Err(FrontendError::Format(format!(
                        "negative guard multiplier at coordinate {key}"
                    )))
                }
                (true, Some(mu)) => entry.mu = Some(mu),
                (true, None) => entry.mu = Some(0.0),
                (false, Some(_)) => {
                    return Err(FrontendError::Format(format!(
                        "guard multiplier given for non-test coordinate {key}"
                    )))
                }
                (false, None) => {}
            }
            coord_entries.push(entry);
        }
        entries[i] = Some(coord_entries);
    }
    Ok(Policy { entries })
}

pub fn write_policy(policy: &Policy, sys: &EquationSystem) -> String {
    let mut coords = BTreeMap::new();
    for (i, entries) in policy.entries.iter().enumerate() {
        let Some(entries) = entries else { continue };
        let mut per_template = BTreeMap::new();
        for (k, entry) in entries.iter().enumerate() {
            let lambda: BTreeMap<String, f64> = sys
                .template_names()
                .iter()
                .zip(&entry.lambda)
                .filter(|(_, &w)| w != 0.0)
                .map(|(n, &w)| (n.clone(), w))
                .collect();
            per_template.insert(
                sys.template_names()[k].clone(),
                PolicyEntrySpec { lambda, mu: entry.mu },
            );
        }
        coords.insert((i + 1).to_string(), per_template);
    }
    serde_json::to_string_pretty(&PolicyFile { format: 1, coords }).expect("policy serialization")
}

#[derive(Serialize, Deserialize)]
struct BoundsFile {
    format: u32,
    /// 1-based coordinate -> template name -> bound.
    coords: BTreeMap<String, BTreeMap<String, ExtReal>>,
}

/// Direct bounds for constant coordinates; partial rows keep the derived
/// value for missing templates.
pub fn parse_bounds(
    text: &str,
    sys: &EquationSystem,
) -> Result<Vec<(usize, Row)>, FrontendError> {
    let file: BoundsFile =
        serde_json::from_str(text).map_err(|e| FrontendError::Format(e.to_string()))?;
    if file.format != 1 {
        return Err(FrontendError::Format(format!("unsupported format {}", file.format)));
    }
    let mut out = Vec::new();
    for (key, row_spec) in &file.coords {
        let idx: usize = key
            .parse::<usize>()
            .ok()
            .and_then(|k| k.checked_sub(1))
            .ok_or_else(|| FrontendError::Format(format!("bad coordinate key {key:?}")))?;
        if idx >= sys.len() {
            return Err(FrontendError::Format(format!("coordinate {key} out of range")));
        }
        let base = match sys.coord(idx) {
            CoordinateKind::Const(row) => row.clone(),
            _ => {
                return Err(FrontendError::Format(format!(
                    "coordinate {key} is not a constant"
                )))
            }
        };
        let mut row = base;
        for (name, bound) in row_spec {
            let k = sys
                .template_names()
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| {
                    FrontendError::Format(format!("unknown template {name:?} in bounds"))
                })?;
            row.set(k, *bound);
        }
        out.push((idx, row));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_templates_load() {
        let text = r#"{
            "format": 1,
            "dim": 2,
            "vars": ["x", "v"],
            "templates": [
                {"name": "x2", "a": [[1, 0], [0, 0]]},
                {"name": "v2", "a": [[0, 0], [0, 1]]},
                {"name": "L", "a": [[2, 1], [1, 3]]}
            ]
        }"#;
        let set = parse_templates(text).unwrap();
        assert_eq!(set.dim, 2);
        assert_eq!(set.names, vec!["x2", "v2", "L"]);
        assert_eq!(set.forms.len(), 3);
        assert!(!set.forms[2].is_linear());
    }

    #[test]
    fn empty_basis_is_rejected() {
        let text = r#"{"format": 1, "dim": 1, "vars": ["x"], "templates": []}"#;
        assert!(parse_templates(text).is_err());
    }

    #[test]
    fn template_round_trip() {
        let text = r#"{
            "format": 1,
            "dim": 2,
            "vars": ["x", "y"],
            "templates": [
                {"name": "p1", "b": [1, 1]},
                {"name": "p2", "a": [[1, 0.5], [0.5, -2]], "b": [0, 3], "c": -1.5}
            ]
        }"#;
        let set = parse_templates(text).unwrap();
        let printed = write_templates(&set);
        let again = parse_templates(&printed).unwrap();
        assert_eq!(set.names, again.names);
        assert_eq!(set.forms, again.forms);
        assert_eq!(set.vars, again.vars);
    }
}
