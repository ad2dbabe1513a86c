//! The relaxed semantics: each transfer coordinate evaluated through one
//! Shor relaxation per template, join coordinates by pointwise supremum,
//! constants verbatim.
//!
//! Every bounded solve also yields the Lagrange multipliers of its optimum;
//! those multiplier choices are the policies of the policy-iteration engine,
//! and fixing one turns the coordinate into an affine function of the
//! predecessor bounds (evaluated here in closed form).

use crate::domain::{AbstractValue, ExtReal, Row};
use crate::ir::{CoordinateKind, EquationSystem};
use crate::par::{map_indices_with, SweepMode};
use crate::quadforms::{policy_value, QuadFormError, QuadraticForm, ValueTols};
use crate::shor::{relax_bound, ShorStatus};
use crate::solvers::{solve_lp, LpProblem, LpStatus, SdpOptions, SolverError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("solver failed at coordinate {coord}, template {template}: {source}")]
    Solver { coord: usize, template: usize, source: SolverError },
    #[error("policy is inadmissible at (coordinate, template) pairs {pairs:?}")]
    InadmissiblePolicy { pairs: Vec<(usize, usize)> },
    #[error("no policy entry for transfer coordinate {coord}")]
    MissingPolicy { coord: usize },
    #[error("composition failed at coordinate {coord}, template {template}: {source}")]
    Compose { coord: usize, template: usize, source: QuadFormError },
}

/// Multipliers fixed for one (coordinate, template) slot: one weight per
/// basis template, plus the guard weight on tests.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEntry {
    pub lambda: Vec<f64>,
    pub mu: Option<f64>,
}

impl PolicyEntry {
    pub fn zero(width: usize, test: bool) -> Self {
        PolicyEntry { lambda: vec![0.0; width], mu: if test { Some(0.0) } else { None } }
    }

    /// The unit choice: weight 1 on a single template.
    pub fn unit(width: usize, which: usize, test: bool) -> Self {
        let mut e = Self::zero(width, test);
        e.lambda[which] = 1.0;
        e
    }
}

/// A policy: entries for every transfer coordinate and template; `None` at
/// constants and joins, where no choice exists.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub entries: Vec<Option<Vec<PolicyEntry>>>,
}

impl Policy {
    pub fn empty(sys: &EquationSystem) -> Self {
        Policy { entries: vec![None; sys.len()] }
    }
}

/// Dual multipliers recovered from one relaxation sweep; `None` slots had no
/// bounded solve to extract from.
pub type PolicyCandidates = Vec<Option<Vec<Option<PolicyEntry>>>>;

/// Multipliers below this threshold are zeroed when extracting policies.
pub const DUAL_CLAMP: f64 = 1e-8;

/// Solver duals arrive with sub-tolerance noise; snapping to this grid
/// keeps policies stable against dual noise at the gap-tolerance scale (a
/// weight of exactly one at a conservation law
/// must not come back as one-plus-epsilon, or the least-fixpoint program
/// of the next round turns infeasible).
fn snap_dual(d: f64) -> f64 {
    if d < DUAL_CLAMP {
        0.0
    } else {
        (d * 1e6).round() / 1e6
    }
}

fn compose_for(
    sys: &EquationSystem,
    coord: usize,
    template: usize,
) -> Result<QuadraticForm, RelaxError> {
    let map = match sys.coord(coord) {
        CoordinateKind::Assign { map, .. } | CoordinateKind::Test { map, .. } => map,
        _ => unreachable!("compose_for on non-transfer coordinate"),
    };
    map.compose(&sys.templates()[template]).map_err(|source| RelaxError::Compose {
        coord,
        template,
        source,
    })
}

fn guard_of(sys: &EquationSystem, coord: usize) -> Option<&QuadraticForm> {
    match sys.coord(coord) {
        CoordinateKind::Test { guard, .. } => Some(guard),
        _ => None,
    }
}

/// One relaxed solve for (coordinate, template) against the predecessor row.
fn relax_slot(
    sys: &EquationSystem,
    coord: usize,
    template: usize,
    prev: &Row,
    opts: &SdpOptions,
) -> Result<(ExtReal, Option<PolicyEntry>), RelaxError> {
    let objective = compose_for(sys, coord, template)?;
    // finite predecessor bounds become constraints; +inf bounds are dropped,
    // which is the lambda * inf = 0 convention in LMI form
    let mut constraints: Vec<QuadraticForm> = Vec::new();
    let mut owners: Vec<usize> = Vec::new();
    for (q_idx, (q, bound)) in sys.templates().iter().zip(prev.iter()).enumerate() {
        if let ExtReal::Finite(b) = bound {
            constraints.push(q.minus_const(b));
            owners.push(q_idx);
        }
    }
    let guard = guard_of(sys, coord);
    if let Some(r) = guard {
        constraints.push(r.clone());
    }
    let refs: Vec<&QuadraticForm> = constraints.iter().collect();
    let out = relax_bound(&objective, &refs, opts);
    match out.status {
        ShorStatus::Bounded => {
            let mut entry = PolicyEntry::zero(sys.template_count(), guard.is_some());
            let mut duals = out.multipliers.iter().copied();
            for &owner in &owners {
                let d = duals.next().unwrap_or(0.0);
                entry.lambda[owner] = if d < DUAL_CLAMP { 0.0 } else { d };
            }
            if guard.is_some() {
                let d = duals.next().unwrap_or(0.0);
                entry.mu = Some(if d < DUAL_CLAMP { 0.0 } else { d });
            }
            Ok((ExtReal::Finite(out.bound), Some(entry)))
        }
        ShorStatus::Infeasible | ShorStatus::Unbounded => Ok((ExtReal::PosInf, None)),
        ShorStatus::Failure => {
            if std::env::var_os("QUADTEMPL_DUMP_FAIL").is_some() {
                let refs2: Vec<&QuadraticForm> = constraints.iter().collect();
                let problem = crate::shor::assemble(&objective, &refs2);
                eprintln!(
                    "failed solve at coord {coord} template {template}:\n{}",
                    crate::solvers::write_sdp_problem(&problem)
                );
            }
            Err(RelaxError::Solver {
                coord,
                template,
                source: SolverError::NumericalFailure("relaxation solve failed".into()),
            })
        }
    }
}

/// Evaluate one coordinate of the relaxed map against the current value
/// (the chaotic-iteration workhorse); the per-template solves fan out
/// according to `mode`.
pub fn evaluate_coordinate(
    sys: &EquationSystem,
    i: usize,
    v: &AbstractValue,
    opts: &SdpOptions,
    mode: SweepMode,
) -> Result<(Row, Vec<Option<PolicyEntry>>), RelaxError> {
    let width = sys.template_count();
    match sys.coord(i) {
        CoordinateKind::Const(row) => Ok((row.clone(), vec![None; width])),
        CoordinateKind::Join { left, right } => {
            Ok((v.row(*left).join(v.row(*right)), vec![None; width]))
        }
        CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => {
            let prev = *prev;
            if v.row(prev).has_neg_inf() {
                return Ok((Row::bottom(width), vec![None; width]));
            }
            let results = map_indices_with(mode, width, |k| relax_slot(sys, i, k, v.row(prev), opts));
            let mut row = Row::bottom(width);
            let mut entries = Vec::with_capacity(width);
            for (k, res) in results.into_iter().enumerate() {
                let (bound, entry) = res?;
                row.set(k, bound);
                entries.push(entry);
            }
            Ok((row, entries))
        }
    }
}

/// Evaluate the relaxed map at `v`, fanning the per-(coordinate, template)
/// solves out according to `mode`. Also returns the dual multipliers of
/// every bounded solve as policy candidates.
pub fn evaluate_relaxed_with(
    sys: &EquationSystem,
    v: &AbstractValue,
    opts: &SdpOptions,
    mode: SweepMode,
) -> Result<(AbstractValue, PolicyCandidates), RelaxError> {
    let width = sys.template_count();
    let n = sys.len();

    // flatten the transfer slots
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        if sys.coord(i).is_transfer() {
            let prev = match sys.coord(i) {
                CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => *prev,
                _ => unreachable!(),
            };
            if !v.row(prev).has_neg_inf() {
                for k in 0..width {
                    slots.push((i, k));
                }
            }
        }
    }

    let results = map_indices_with(mode, slots.len(), |s| {
        let (i, k) = slots[s];
        let prev = match sys.coord(i) {
            CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => *prev,
            _ => unreachable!(),
        };
        relax_slot(sys, i, k, v.row(prev), opts)
    });

    let mut value = AbstractValue::bottom(n, width);
    let mut candidates: PolicyCandidates = vec![None; n];
    for i in 0..n {
        match sys.coord(i) {
            CoordinateKind::Const(row) => *value.row_mut(i) = row.clone(),
            CoordinateKind::Join { left, right } => {
                *value.row_mut(i) = v.row(*left).join(v.row(*right));
            }
            _ => {
                // transfer rows with an empty predecessor stay at bottom
                candidates[i] = Some(vec![None; width]);
            }
        }
    }
    for (s, res) in slots.iter().zip(results) {
        let (i, k) = *s;
        let (bound, entry) = res?;
        value.row_mut(i).set(k, bound);
        candidates[i].as_mut().expect("slot initialized")[k] = entry;
    }
    Ok((value, candidates))
}

/// [`evaluate_relaxed_with`] in the default sweep mode.
pub fn evaluate_relaxed(
    sys: &EquationSystem,
    v: &AbstractValue,
    opts: &SdpOptions,
) -> Result<(AbstractValue, PolicyCandidates), RelaxError> {
    evaluate_relaxed_with(sys, v, opts, SweepMode::default())
}

/// Closed-form value table `V` of a policy: one extended real per transfer
/// coordinate and template, independent of the abstract value.
pub fn policy_value_table(
    sys: &EquationSystem,
    policy: &Policy,
    tols: &ValueTols,
) -> Result<Vec<Option<Vec<ExtReal>>>, RelaxError> {
    let mut table: Vec<Option<Vec<ExtReal>>> = vec![None; sys.len()];
    for i in 0..sys.len() {
        if !sys.coord(i).is_transfer() {
            continue;
        }
        let entries = policy.entries[i]
            .as_ref()
            .ok_or(RelaxError::MissingPolicy { coord: i })?;
        let mut row = Vec::with_capacity(sys.template_count());
        for (k, entry) in entries.iter().enumerate() {
            let objective = compose_for(sys, i, k)?;
            let mut constraints: Vec<(&QuadraticForm, f64)> = sys
                .templates()
                .iter()
                .zip(entry.lambda.iter().copied())
                .collect();
            if let Some(r) = guard_of(sys, i) {
                constraints.push((r, entry.mu.unwrap_or(0.0)));
            }
            row.push(policy_value(&objective, &constraints, tols));
        }
        table[i] = Some(row);
    }
    Ok(table)
}

/// Evaluate the affine map of a fixed policy at `v`:
/// `F_i(v)(p) = sum_q lambda(q) v_prev(q) + V_i(p)`, with the convention
/// that a zero weight absorbs infinite bounds.
pub fn evaluate_policy_affine(
    sys: &EquationSystem,
    policy: &Policy,
    v: &AbstractValue,
    tols: &ValueTols,
) -> Result<AbstractValue, RelaxError> {
    let table = policy_value_table(sys, policy, tols)?;
    let mut inadmissible = Vec::new();
    for (i, row) in table.iter().enumerate() {
        if let Some(row) = row {
            for (k, val) in row.iter().enumerate() {
                if *val == ExtReal::PosInf {
                    inadmissible.push((i, k));
                }
            }
        }
    }
    if !inadmissible.is_empty() {
        return Err(RelaxError::InadmissiblePolicy { pairs: inadmissible });
    }

    let width = sys.template_count();
    let mut out = AbstractValue::bottom(sys.len(), width);
    for i in 0..sys.len() {
        match sys.coord(i) {
            CoordinateKind::Const(row) => *out.row_mut(i) = row.clone(),
            CoordinateKind::Join { left, right } => {
                *out.row_mut(i) = v.row(*left).join(v.row(*right));
            }
            CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => {
                let entries = policy.entries[i].as_ref().expect("checked above");
                let vals = table[i].as_ref().expect("transfer coordinate");
                for k in 0..width {
                    let mut acc = ExtReal::Finite(0.0);
                    for (q, weight) in entries[k].lambda.iter().enumerate() {
                        acc = acc.add(v.row(*prev).get(q).mul_weight(*weight));
                    }
                    // the guard contributes no v-term; its weight lives in V
                    out.row_mut(i).set(k, acc.add(vals[k]));
                }
            }
        }
    }
    Ok(out)
}

/// Build the next policy from sweep candidates, falling back to the
/// previous entry wherever a candidate is missing or fails the closed-form
/// admissibility re-check.
pub fn extract_policy(
    sys: &EquationSystem,
    candidates: &PolicyCandidates,
    previous: Option<&Policy>,
    tols: &ValueTols,
) -> Result<Policy, RelaxError> {
    let mut entries: Vec<Option<Vec<PolicyEntry>>> = vec![None; sys.len()];
    let mut missing = Vec::new();
    for i in 0..sys.len() {
        if !sys.coord(i).is_transfer() {
            continue;
        }
        let width = sys.template_count();
        let mut coord_entries = Vec::with_capacity(width);
        for k in 0..width {
            let candidate = candidates
                .get(i)
                .and_then(|c| c.as_ref())
                .and_then(|c| c[k].clone());
            let admissible = |entry: &PolicyEntry| -> Result<bool, RelaxError> {
                let objective = compose_for(sys, i, k)?;
                let mut constraints: Vec<(&QuadraticForm, f64)> = sys
                    .templates()
                    .iter()
                    .zip(entry.lambda.iter().copied())
                    .collect();
                if let Some(r) = guard_of(sys, i) {
                    constraints.push((r, entry.mu.unwrap_or(0.0)));
                }
                Ok(policy_value(&objective, &constraints, tols).is_finite())
            };
            let chosen = match candidate {
                Some(entry) => {
                    let snapped = PolicyEntry {
                        lambda: entry.lambda.iter().map(|&d| snap_dual(d)).collect(),
                        mu: entry.mu.map(snap_dual),
                    };
                    if admissible(&snapped)? {
                        Some(snapped)
                    } else if admissible(&entry)? {
                        // boundary duals can lose semidefiniteness under
                        // snapping; keep them verbatim then
                        Some(entry)
                    } else {
                        previous
                            .and_then(|p| p.entries[i].as_ref())
                            .map(|prev_entries| prev_entries[k].clone())
                    }
                }
                None => previous
                    .and_then(|p| p.entries[i].as_ref())
                    .map(|prev_entries| prev_entries[k].clone()),
            };
            match chosen {
                Some(e) => coord_entries.push(e),
                None => {
                    missing.push((i, k));
                    coord_entries.push(PolicyEntry::zero(width, guard_of(sys, i).is_some()));
                }
            }
        }
        entries[i] = Some(coord_entries);
    }
    if !missing.is_empty() {
        return Err(RelaxError::InadmissiblePolicy { pairs: missing });
    }
    Ok(Policy { entries })
}

/// Strict-feasibility check of every transfer coordinate's predecessor set
/// (intersected with the guard on tests): reports whether a Slater point was
/// exhibited.
///
/// Candidates tried in order: the origin, the initial box center, a most-
/// interior point of the linear constraints (by LP), then a short
/// deterministic pseudo-random search around each. Absence of a found point
/// reads as "unverified", never as a proof of emptiness.
pub fn slater_check(sys: &EquationSystem, v: &AbstractValue, slack: f64) -> Vec<bool> {
    let d = sys.dim();
    let mut out = vec![true; sys.len()];
    for i in 0..sys.len() {
        let prev = match sys.coord(i) {
            CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => *prev,
            _ => continue,
        };
        let row = v.row(prev);
        if row.has_neg_inf() {
            out[i] = false;
            continue;
        }
        let guard = guard_of(sys, i);
        let strictly_ok = |x: &[f64]| -> bool {
            let templates_ok = sys.templates().iter().zip(row.iter()).all(|(q, b)| match b {
                ExtReal::PosInf => true,
                ExtReal::NegInf => false,
                ExtReal::Finite(b) => q.evaluate(x) < b - slack * (1.0 + b.abs()),
            });
            templates_ok && guard.map_or(true, |r| r.evaluate(x) < -slack)
        };

        let mut candidates: Vec<Vec<f64>> = vec![vec![0.0; d]];
        if let Some(bx) = sys.init_box() {
            if bx.len() == d {
                candidates.push(bx.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
            }
        }
        if let Some(x) = chebyshev_point(sys, row, guard) {
            candidates.push(x);
        }

        let mut found = candidates.iter().any(|x| strictly_ok(x));
        if !found {
            // deterministic pseudo-random probes around each candidate
            let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            };
            'search: for base in &candidates {
                for scale in [0.01, 0.1, 0.5, 1.0, 2.0] {
                    for _ in 0..40 {
                        let x: Vec<f64> = base.iter().map(|b| b + scale * next()).collect();
                        if strictly_ok(&x) {
                            found = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        out[i] = found;
    }
    out
}

/// Most-interior point of the linear part of a row: maximize the common
/// slack `t` with `b_q . x + ||b_q|| t <= bound` over the linear templates
/// (and a linear guard). Quadratic templates are checked by the caller.
fn chebyshev_point(
    sys: &EquationSystem,
    row: &Row,
    guard: Option<&QuadraticForm>,
) -> Option<Vec<f64>> {
    let d = sys.dim();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut push_linear = |q: &QuadraticForm, bound: f64| {
        let norm: f64 = q.b().iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        let mut r: Vec<f64> = q.b().to_vec();
        r.push(norm);
        rows.push(r);
        rhs.push(bound - q.c());
    };
    for (q, b) in sys.templates().iter().zip(row.iter()) {
        if let (true, ExtReal::Finite(b)) = (q.is_linear(), b) {
            push_linear(q, b);
        }
    }
    if let Some(r) = guard {
        if r.is_linear() {
            push_linear(r, 0.0);
        }
    }
    if rows.is_empty() {
        return None;
    }
    // keep the search bounded: |x_i| <= 1e6, t <= 1e6
    for i in 0..=d {
        let mut r = vec![0.0; d + 1];
        r[i] = 1.0;
        rows.push(r.clone());
        rhs.push(1e6);
        r[i] = -1.0;
        rows.push(r);
        rhs.push(1e6);
    }
    let mut objective = vec![0.0; d + 1];
    objective[d] = -1.0;
    let lp = LpProblem { objective, rows, rhs };
    match solve_lp(&lp) {
        Ok(out) if out.status == LpStatus::Optimal && !out.point.is_empty() => {
            Some(out.point[..d].to_vec())
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::quadforms::{AffineMap, TransferMap};

    fn rotation_system() -> EquationSystem {
        let p1 = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        let p2 = p1.neg();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let t = AffineMap::new(Mat::from_rows(&[vec![c, -c], vec![c, c]]), vec![0.0; 2]);
        EquationSystem::new(
            2,
            vec![p1, p2],
            vec!["p1".into(), "p2".into()],
            vec![
                CoordinateKind::Const(Row::from_finite(&[1.0, -1.0])),
                CoordinateKind::Assign { prev: 0, map: TransferMap::Affine(t) },
            ],
            vec!["x".into(), "y".into()],
        )
    }

    #[test]
    fn rotation_invariance_of_the_circle() {
        let sys = rotation_system();
        let mut v = AbstractValue::bottom(2, 2);
        *v.row_mut(0) = Row::from_finite(&[1.0, -1.0]);
        let (fv, cands) = evaluate_relaxed(&sys, &v, &SdpOptions::default()).unwrap();
        let b1 = fv.row(1).get(0).finite().unwrap();
        let b2 = fv.row(1).get(1).finite().unwrap();
        assert!((b1 - 1.0).abs() < 1e-6, "p1 bound {b1}");
        assert!((b2 + 1.0).abs() < 1e-6, "p2 bound {b2}");
        assert!(cands[1].as_ref().unwrap()[0].is_some());
    }

    #[test]
    fn empty_predecessor_short_circuits() {
        let sys = rotation_system();
        let v = AbstractValue::bottom(2, 2);
        let (fv, _) = evaluate_relaxed(&sys, &v, &SdpOptions::default()).unwrap();
        assert_eq!(fv.row(1), &Row::bottom(2));
    }

    #[test]
    fn unit_policy_reproduces_bound() {
        // lambda = indicator(p) turns the affine value into v(p) itself
        let sys = rotation_system();
        let mut policy = Policy::empty(&sys);
        policy.entries[1] =
            Some(vec![PolicyEntry::unit(2, 0, false), PolicyEntry::unit(2, 1, false)]);
        let mut v = AbstractValue::bottom(2, 2);
        *v.row_mut(0) = Row::from_finite(&[1.0, -1.0]);
        let out = evaluate_policy_affine(&sys, &policy, &v, &ValueTols::default()).unwrap();
        assert_eq!(out.row(1).get(0), ExtReal::Finite(1.0));
        assert_eq!(out.row(1).get(1), ExtReal::Finite(-1.0));
    }

    #[test]
    fn slater_holds_on_interior_rows() {
        let sys = rotation_system();
        let mut v = AbstractValue::bottom(2, 2);
        *v.row_mut(0) = Row::from_finite(&[1.0, -0.5]);
        // annulus 0.5 <= |x|^2 <= 1 has interior points but not the origin
        let checks = slater_check(&sys, &v, 1e-12);
        assert!(checks[1]);
        // top row: everything strictly feasible at the origin
        *v.row_mut(0) = Row::top(2);
        assert!(slater_check(&sys, &v, 1e-12)[1]);
        // empty predecessor
        *v.row_mut(0) = Row::bottom(2);
        assert!(!slater_check(&sys, &v, 1e-12)[1]);
    }
}
