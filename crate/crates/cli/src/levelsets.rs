//! Level-set sampling for external plotting: CSV rows
//! `template,x1,...,xd,value` where `value = p(x) - bound`, so the set
//! boundary is the zero contour.

use quadtempl::domain::{AbstractValue, ExtReal};
use quadtempl::ir::EquationSystem;
use std::fmt::Write as _;
use std::path::Path;

const PER_AXIS: usize = 61;

pub fn emit(path: &Path, sys: &EquationSystem, value: &AbstractValue) -> Result<(), String> {
    let d = sys.dim();
    if d > 3 {
        return Err(format!("level-set sampling supports up to 3 variables, program has {d}"));
    }
    // the sampling window covers the widest finite row
    let mut radius = 1.0f64;
    for row in &value.0 {
        for (p, b) in sys.templates().iter().zip(row.iter()) {
            if let ExtReal::Finite(b) = b {
                if p.is_linear() {
                    radius = radius.max(b.abs());
                } else if b > 0.0 {
                    radius = radius.max(b.sqrt() * 1.5);
                }
            }
        }
    }
    radius = radius.min(1e3);

    let mut out = String::new();
    let mut header = String::from("template");
    for name in sys.var_names() {
        write!(header, ",{name}").unwrap();
    }
    writeln!(out, "{header},value").unwrap();

    // one block per template, sampled at the last coordinate's bounds
    let last = match value.0.last() {
        Some(r) => r,
        None => return std::fs::write(path, out).map_err(|e| e.to_string()),
    };
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = (0..d)
            .map(|i| -radius + 2.0 * radius * idx[i] as f64 / (PER_AXIS - 1) as f64)
            .collect();
        for (k, (p, b)) in sys.templates().iter().zip(last.iter()).enumerate() {
            if let ExtReal::Finite(b) = b {
                let v = p.evaluate(&x) - b;
                let name = &sys.template_names()[k];
                let coords: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
                writeln!(out, "{name},{},{v}", coords.join(",")).unwrap();
            }
        }
        let mut carry = 0;
        loop {
            if carry == d {
                return std::fs::write(path, out).map_err(|e| e.to_string());
            }
            idx[carry] += 1;
            if idx[carry] < PER_AXIS {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
    }
}
