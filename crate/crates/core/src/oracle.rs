//! Brute-force concrete oracle: certified lower bounds on the abstract
//! transfer values by sampling feasible points.
//!
//! For each transfer coordinate the oracle enumerates points of a sampling
//! box, keeps those inside the predecessor's sub-level set (and guard), and
//! maximizes each composed template over them. Any finite sample yields a
//! valid lower bound on the supremum, so the result can be compared
//! against the relaxed bounds without trusting the relaxation. Low
//! dimensions get a full grid; higher ones a fixed-seed sample.

use crate::domain::{concretize_membership, AbstractValue, ExtReal, Row};
use crate::ir::{CoordinateKind, EquationSystem};

#[derive(Clone, Debug)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub fallback: (f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points_per_axis: 24, fallback: (-10.0, 10.0) }
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    /// Grid-max row per transfer coordinate (`None` elsewhere). All entries
    /// are lower bounds on the abstract transfer value.
    pub bounds: Vec<Option<Row>>,
    /// Coordinates whose feasible set met no sample point (their rows are
    /// all bottom).
    pub empty: Vec<usize>,
}

/// Per-variable sampling intervals implied by interval-like templates of a
/// row.
fn sampling_box(sys: &EquationSystem, row: &Row, spec: &GridSpec) -> Vec<(f64, f64)> {
    let d = sys.dim();
    let mut lo = vec![f64::NEG_INFINITY; d];
    let mut hi = vec![f64::INFINITY; d];
    for (q, bound) in sys.templates().iter().zip(row.iter()) {
        let ExtReal::Finite(b) = bound else { continue };
        let nz: Vec<usize> = (0..d)
            .filter(|&i| {
                q.b()[i] != 0.0 || (0..d).any(|j| q.a().get(i, j) != 0.0 || q.a().get(j, i) != 0.0)
            })
            .collect();
        if q.is_linear() {
            if let [i] = nz[..] {
                let w = q.b()[i];
                let bound = (b - q.c()) / w;
                if w > 0.0 {
                    hi[i] = hi[i].min(bound);
                } else {
                    lo[i] = lo[i].max(bound);
                }
            }
        } else if let [i] = nz[..] {
            let aii = q.a().get(i, i);
            if aii > 0.0 {
                // a x^2 + b x + c <= bound
                let mid = -q.b()[i] / (2.0 * aii);
                let disc = mid * mid + (b - q.c()) / aii;
                if disc >= 0.0 {
                    lo[i] = lo[i].max(mid - disc.sqrt());
                    hi[i] = hi[i].min(mid + disc.sqrt());
                }
            }
        } else if q.b().iter().all(|&v| v == 0.0) && b >= q.c() {
            let emin = crate::linalg::sym_eigen(q.a()).min_value();
            if emin > 0.0 {
                let r = ((b - q.c()) / emin).sqrt();
                for i in 0..d {
                    lo[i] = lo[i].max(-r);
                    hi[i] = hi[i].min(r);
                }
            }
        }
    }
    (0..d)
        .map(|i| {
            if lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i] {
                (lo[i], hi[i])
            } else {
                spec.fallback
            }
        })
        .collect()
}

fn grid_points(bx: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let d = bx.len();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let point: Vec<f64> = (0..d)
            .map(|i| {
                let (lo, hi) = bx[i];
                if per_axis == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * idx[i] as f64 / (per_axis - 1) as f64
                }
            })
            .collect();
        out.push(point);
        let mut carry = 0;
        loop {
            if carry == d {
                return out;
            }
            idx[carry] += 1;
            if idx[carry] < per_axis {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
    }
}

fn sampled_points(bx: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    let mut state: u64 = 0x853c_49e6_748f_ea9b;
    let mut unit = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count)
        .map(|_| bx.iter().map(|(lo, hi)| lo + (hi - lo) * unit()).collect())
        .collect()
}

/// Run the oracle against the abstract value `v`.
///
/// `extra_points` lets callers add structured samples (for instance points
/// on a thin constraint surface that no grid hits).
pub fn oracle(
    sys: &EquationSystem,
    v: &AbstractValue,
    spec: &GridSpec,
    extra_points: &[Vec<f64>],
) -> OracleResult {
    let width = sys.template_count();
    let mut bounds = vec![None; sys.len()];
    let mut empty = Vec::new();
    for i in 0..sys.len() {
        let (prev, map, guard) = match sys.coord(i) {
            CoordinateKind::Assign { prev, map } => (*prev, map, None),
            CoordinateKind::Test { prev, map, guard, .. } => (*prev, map, Some(guard)),
            _ => continue,
        };
        let row = v.row(prev);
        if row.has_neg_inf() {
            bounds[i] = Some(Row::bottom(width));
            empty.push(i);
            continue;
        }
        let bx = sampling_box(sys, row, spec);
        let mut points = if sys.dim() <= 3 {
            grid_points(&bx, spec.points_per_axis)
        } else {
            sampled_points(&bx, spec.points_per_axis.pow(3).max(4096))
        };
        points.extend_from_slice(extra_points);

        let mut out = Row::bottom(width);
        let mut any = false;
        for x in &points {
            if x.len() != sys.dim() {
                continue;
            }
            if !concretize_membership(row, sys.templates(), x) {
                continue;
            }
            if let Some(r) = guard {
                if r.evaluate(x) > 0.0 {
                    continue;
                }
            }
            any = true;
            let y = map.apply(x);
            for (k, p) in sys.templates().iter().enumerate() {
                out.set(k, out.get(k).max(ExtReal::Finite(p.evaluate(&y))));
            }
        }
        if !any {
            empty.push(i);
        }
        bounds[i] = Some(out);
    }
    OracleResult { bounds, empty }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::quadforms::{AffineMap, QuadraticForm, TransferMap};

    #[test]
    fn empty_predecessor_reports_bottom() {
        let p = QuadraticForm::new(Mat::identity(1), vec![0.0], 0.0);
        let sys = EquationSystem::new(
            1,
            vec![p],
            vec!["x2".into()],
            vec![
                CoordinateKind::Const(Row::bottom(1)),
                CoordinateKind::Assign {
                    prev: 0,
                    map: TransferMap::Affine(AffineMap::identity(1)),
                },
            ],
            vec!["x".into()],
        );
        let v = AbstractValue::bottom(2, 1);
        let out = oracle(&sys, &v, &GridSpec::default(), &[]);
        assert_eq!(out.bounds[1], Some(Row::bottom(1)));
        assert!(out.empty.contains(&1));
    }

    #[test]
    fn box_transfer_lower_bound() {
        // identity transfer of x^2 <= 4: grid maximum approaches 4 from below
        let p = QuadraticForm::new(Mat::identity(1), vec![0.0], 0.0);
        let sys = EquationSystem::new(
            1,
            vec![p],
            vec!["x2".into()],
            vec![
                CoordinateKind::Const(Row::from_finite(&[4.0])),
                CoordinateKind::Assign {
                    prev: 0,
                    map: TransferMap::Affine(AffineMap::identity(1)),
                },
            ],
            vec!["x".into()],
        );
        let mut v = AbstractValue::bottom(2, 1);
        *v.row_mut(0) = Row::from_finite(&[4.0]);
        let out = oracle(&sys, &v, &GridSpec::default(), &[]);
        let got = out.bounds[1].as_ref().unwrap().get(0).finite().unwrap();
        assert!(got <= 4.0 + 1e-12);
        assert!(got > 3.5, "grid maximum {got} too weak");
    }
}
