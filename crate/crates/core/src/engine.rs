//! The two fixpoint engines.
//!
//! Kleene iteration sweeps the coordinates in program order from bottom,
//! closing each row as it goes; an acceleration window rounds finite bounds
//! outward with decreasing precision to force convergence, widening to top
//! after the window if entries still move. Policy iteration fixes the
//! Lagrange multipliers of the relaxation, computes the least fixpoint of
//! the resulting affine map with one linear program, closes it, and improves
//! the policy from the duals of a relaxed sweep, stopping at the first
//! sweep that no longer decreases anything. Iterates of policy iteration
//! are safe invariants even when the loop is cut short; every returned
//! value is re-verified against one relaxed sweep before it is labeled.

use crate::domain::{closure, AbstractValue, ExtReal, Row};
use crate::ir::{CoordinateKind, EquationSystem};
use crate::par::SweepMode;
use crate::quadforms::{QuadraticForm, ValueTols};
use crate::relax::{
    evaluate_coordinate, evaluate_relaxed_with, extract_policy, policy_value_table, Policy,
    PolicyEntry, RelaxError,
};
use crate::solvers::{solve_lp, LpProblem, LpStatus, SdpOptions, SolverError};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no admissible initial policy: offending (coordinate, template) pairs {0:?}")]
    InitialPolicy(Vec<(usize, usize)>),
    #[error("least-fixpoint program infeasible under the initial policy")]
    InitialPolicyInfeasible,
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error("least-fixpoint program failed: {0}")]
    Lp(SolverError),
    #[error("{0}")]
    Internal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Kleene,
    Policy,
}

#[derive(Clone, Debug)]
pub enum InitialPolicy {
    Given(Policy),
    FromGuards,
    FromKleeneWarmup(usize),
}

#[derive(Clone, Debug)]
pub struct AccelConfig {
    pub enabled: bool,
    /// First 1-based iteration of the rounding window; defaults to n + 1.
    pub start: Option<usize>,
    pub length: usize,
    pub widen_to_top_after: bool,
}

impl Default for AccelConfig {
    fn default() -> Self {
        AccelConfig { enabled: true, start: None, length: 11, widen_to_top_after: true }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub method: Method,
    pub max_iters: usize,
    pub accel: AccelConfig,
    pub initial_policy: InitialPolicy,
    pub sdp: SdpOptions,
    pub value_tols: ValueTols,
    /// Absolute and relative tolerance of the fixpoint equality test.
    pub fix_atol: f64,
    pub fix_rtol: f64,
    /// Constraint tightening of the least-fixpoint program.
    pub eps_margin: f64,
    /// Strictness slack of the Slater search.
    pub slater_slack: f64,
    pub closure_each_step: bool,
    pub sweep_mode: SweepMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            method: Method::Policy,
            max_iters: 100,
            accel: AccelConfig::default(),
            initial_policy: InitialPolicy::FromGuards,
            sdp: SdpOptions::default(),
            value_tols: ValueTols::default(),
            fix_atol: 1e-6,
            fix_rtol: 1e-6,
            eps_margin: 1e-9,
            slater_slack: 1e-12,
            closure_each_step: true,
            sweep_mode: SweepMode::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    SlaterStop,
    MaxIters,
    AccelWidened,
    NoImprovement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Fixpoint,
    Postfixpoint(StopReason),
    NotConverged,
}

impl RunStatus {
    pub fn is_safe(self) -> bool {
        !matches!(self, RunStatus::NotConverged)
    }
}

#[derive(Clone, Debug)]
pub struct IterationStep {
    /// 1-based step number within the run.
    pub index: usize,
    pub value: AbstractValue,
    /// The pre-closure least fixpoint of the current policy, when one was
    /// solved this step.
    pub lp_value: Option<AbstractValue>,
    pub policy: Option<Policy>,
    pub wall: Duration,
}

#[derive(Clone, Debug, Default)]
pub struct PhaseTimings {
    pub relax: Duration,
    pub lp: Duration,
    pub closure: Duration,
    pub total: Duration,
}

#[derive(Clone, Debug)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    pub status: RunStatus,
    pub value: AbstractValue,
    /// Sweeps for Kleene; least-fixpoint rounds for policy iteration.
    pub iterations: usize,
    /// Accepted policy improvements (policy iteration only).
    pub improvements: usize,
    /// Set when a monotonicity assertion of the iteration was violated
    /// numerically (recorded, not fatal).
    pub monotonicity_violated: bool,
    pub timings: PhaseTimings,
}

/// Round `x` up to `digits` significant decimal digits (0 digits = integer
/// ceiling).
fn round_up_significant(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    if digits == 0 {
        return x.ceil();
    }
    let mag = x.abs().log10().floor() as i32 - (digits as i32 - 1);
    let scale = 10f64.powi(mag);
    (x / scale).ceil() * scale
}

/// Round `x` up to the next value in `{1, 2, 5} * 10^k`.
fn round_up_125(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    if x > 0.0 {
        let k = x.log10().floor();
        let base = 10f64.powf(k);
        for m in [1.0, 2.0, 5.0, 10.0] {
            if m * base >= x * (1.0 - 1e-12) {
                return m * base;
            }
        }
        10.0 * base
    } else {
        // negative upper bound: the nearest grid value toward zero
        let ax = -x;
        let k = ax.log10().ceil();
        let mut best = f64::INFINITY;
        for kk in [k, k - 1.0, k - 2.0] {
            let base = 10f64.powf(kk);
            for m in [5.0, 2.0, 1.0] {
                let cand = -(m * base);
                if cand >= x * (1.0 + 1e-12) && cand < best {
                    best = cand;
                }
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }
}

/// The acceleration schedule: precision decreases across the window, with a
/// single coarse-grid jolt late, and integer settling at the end.
fn accel_round(x: f64, window_pos: usize) -> f64 {
    match window_pos {
        0 | 1 => round_up_significant(x, 2),
        2 | 3 => round_up_significant(x, 1),
        4..=6 => round_up_significant(x, 0),
        7 | 8 => round_up_125(x),
        _ => round_up_significant(x, 0),
    }
}

fn round_row(row: &mut Row, window_pos: usize) {
    for k in 0..row.width() {
        if let ExtReal::Finite(v) = row.get(k) {
            row.set(k, ExtReal::Finite(accel_round(v, window_pos)));
        }
    }
}

/// Kleene iteration from bottom with per-row closure and the outward
/// rounding window.
pub fn kleene(sys: &EquationSystem, cfg: &EngineConfig) -> Result<IterationTrace, EngineError> {
    let t0 = Instant::now();
    let n = sys.len();
    let width = sys.template_count();
    let mut v = AbstractValue::bottom(n, width);
    let mut timings = PhaseTimings::default();
    let mut steps = Vec::new();
    let accel_start = cfg.accel.start.unwrap_or(n + 1);
    let mut widened = false;
    let mut converged = false;
    let mut iters = 0usize;

    for k in 1..=cfg.max_iters {
        let step_start = Instant::now();
        let prev = v.clone();
        for i in 0..n {
            let tr = Instant::now();
            let (mut row, _) = evaluate_coordinate(sys, i, &v, &cfg.sdp, cfg.sweep_mode)?;
            timings.relax += tr.elapsed();
            if cfg.closure_each_step {
                let tc = Instant::now();
                row = closure(&row, sys.templates(), &cfg.sdp);
                timings.closure += tc.elapsed();
            }
            if cfg.accel.enabled && k >= accel_start {
                if k < accel_start + cfg.accel.length {
                    round_row(&mut row, k - accel_start);
                } else if cfg.accel.widen_to_top_after {
                    // past the window: entries still moving go to top
                    for t in 0..width {
                        if !row.get(t).approx_eq(prev.row(i).get(t), cfg.fix_atol, cfg.fix_rtol)
                        {
                            row.set(t, ExtReal::PosInf);
                            widened = true;
                        }
                    }
                }
            }
            *v.row_mut(i) = row;
        }
        iters = k;
        // trace keeps the early sweeps and every accelerated one; the long
        // tail of a slow run would otherwise dominate memory
        if k <= 32 || k + 16 >= accel_start || k % 64 == 0 {
            steps.push(IterationStep {
                index: k,
                value: v.clone(),
                lp_value: None,
                policy: None,
                wall: step_start.elapsed(),
            });
        }
        if v.approx_eq(&prev, cfg.fix_atol, cfg.fix_rtol) {
            converged = true;
            break;
        }
    }

    // label the result against one plain relaxed sweep
    let tr = Instant::now();
    let (fv, _) = evaluate_relaxed_with(sys, &v, &cfg.sdp, cfg.sweep_mode)?;
    timings.relax += tr.elapsed();
    let closed = AbstractValue(
        fv.0.iter().map(|r| closure(r, sys.templates(), &cfg.sdp)).collect(),
    );
    let status = if converged && closed.approx_eq(&v, cfg.fix_atol, cfg.fix_rtol) {
        RunStatus::Fixpoint
    } else if fv.le_within(&v, safety_slack(&v, cfg)) {
        RunStatus::Postfixpoint(if widened {
            StopReason::AccelWidened
        } else if converged {
            StopReason::NoImprovement
        } else {
            StopReason::MaxIters
        })
    } else {
        RunStatus::NotConverged
    };
    timings.total = t0.elapsed();
    Ok(IterationTrace {
        steps,
        status,
        value: v,
        iterations: iters,
        improvements: 0,
        monotonicity_violated: false,
        timings,
    })
}

fn safety_slack(v: &AbstractValue, cfg: &EngineConfig) -> f64 {
    let scale = v
        .0
        .iter()
        .flat_map(|r| r.iter())
        .filter_map(|b| b.finite())
        .fold(1.0f64, |m, x| m.max(x.abs()));
    (cfg.fix_atol + cfg.fix_rtol * scale).max(1e-9)
}

/// The elimination mark of one bound variable in the least-fixpoint
/// program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarMark {
    Var(usize),
    Pos,
    Neg,
}

/// Least fixpoint of the affine map of `policy` by one linear program.
///
/// Entries forced to +-infinity by constants and positive policy weights
/// are eliminated up front; the LP runs on the finite remainder with its
/// constraints tightened by `eps` (dropped on retry when that margin makes
/// the program infeasible).
fn least_fixpoint_lp(
    sys: &EquationSystem,
    policy: &Policy,
    values: &[Option<Vec<ExtReal>>],
    eps: f64,
) -> Result<Result<AbstractValue, LpStatus>, EngineError> {
    let n = sys.len();
    let width = sys.template_count();

    // +inf propagation (smallest set closed under the rules)
    let mut pos = vec![vec![false; width]; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            for p in 0..width {
                if pos[i][p] {
                    continue;
                }
                let now = match sys.coord(i) {
                    CoordinateKind::Const(row) => row.get(p) == ExtReal::PosInf,
                    CoordinateKind::Join { left, right } => pos[*left][p] || pos[*right][p],
                    CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => {
                        let entry = &policy.entries[i].as_ref().expect("transfer policy")[p];
                        entry.lambda.iter().enumerate().any(|(q, &w)| w > 0.0 && pos[*prev][q])
                    }
                };
                if now {
                    pos[i][p] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // -inf persistence (greatest set consistent with the rules), dominated
    // by +inf wherever both would apply
    let mut neg = vec![vec![true; width]; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            for p in 0..width {
                if !neg[i][p] {
                    continue;
                }
                let stays = if pos[i][p] {
                    false
                } else {
                    match sys.coord(i) {
                        CoordinateKind::Const(row) => row.get(p) == ExtReal::NegInf,
                        CoordinateKind::Join { left, right } => neg[*left][p] && neg[*right][p],
                        CoordinateKind::Assign { prev, .. }
                        | CoordinateKind::Test { prev, .. } => {
                            let entry =
                                &policy.entries[i].as_ref().expect("transfer policy")[p];
                            entry
                                .lambda
                                .iter()
                                .enumerate()
                                .any(|(q, &w)| w > 0.0 && neg[*prev][q])
                        }
                    }
                };
                if !stays {
                    neg[i][p] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut marks = vec![vec![VarMark::Neg; width]; n];
    let mut var_count = 0usize;
    for i in 0..n {
        for p in 0..width {
            marks[i][p] = if pos[i][p] {
                VarMark::Pos
            } else if neg[i][p] {
                VarMark::Neg
            } else {
                let m = VarMark::Var(var_count);
                var_count += 1;
                m
            };
        }
    }

    let assemble = |margin: f64| -> LpProblem {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for i in 0..n {
            for p in 0..width {
                let vi = match marks[i][p] {
                    VarMark::Var(ix) => ix,
                    _ => continue,
                };
                match sys.coord(i) {
                    CoordinateKind::Const(row) => {
                        if let ExtReal::Finite(c) = row.get(p) {
                            // c <= v_i(p), i.e. -v_i(p) <= -c - margin
                            let mut r = vec![0.0; var_count];
                            r[vi] = -1.0;
                            rows.push(r);
                            rhs.push(-c - margin);
                        }
                    }
                    CoordinateKind::Join { left, right } => {
                        for side in [*left, *right] {
                            match marks[side][p] {
                                VarMark::Var(sx) => {
                                    let mut r = vec![0.0; var_count];
                                    r[sx] += 1.0;
                                    r[vi] -= 1.0;
                                    rows.push(r);
                                    rhs.push(-margin);
                                }
                                VarMark::Neg => {}
                                VarMark::Pos => unreachable!("join of +inf was eliminated"),
                            }
                        }
                    }
                    CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => {
                        let entry = &policy.entries[i].as_ref().expect("transfer policy")[p];
                        let vtab = values[i].as_ref().expect("value table");
                        let vconst = vtab[p].finite().expect("admissible policy");
                        // sum_q w_q v_prev(q) + V + margin <= v_i(p)
                        let mut r = vec![0.0; var_count];
                        let mut dropped = false;
                        for (q, &w) in entry.lambda.iter().enumerate() {
                            if w <= 0.0 {
                                continue;
                            }
                            match marks[*prev][q] {
                                VarMark::Var(qx) => r[qx] += w,
                                VarMark::Neg => {
                                    dropped = true; // the whole bound is -inf
                                    break;
                                }
                                VarMark::Pos => unreachable!("+inf term was eliminated"),
                            }
                        }
                        if dropped {
                            continue;
                        }
                        r[vi] -= 1.0;
                        rows.push(r);
                        rhs.push(-vconst - margin);
                    }
                }
            }
        }
        let objective = vec![1.0; var_count];
        LpProblem { objective, rows, rhs }
    };

    let mut solved = None;
    for margin in [eps, 0.0] {
        let lp = assemble(margin);
        if std::env::var_os("QUADTEMPL_LP_TRACE").is_some() {
            eprintln!("lp rows {:?}", lp.rows);
            eprintln!("lp rhs {:?}", lp.rhs);
        }
        let out = solve_lp(&lp).map_err(EngineError::Lp)?;
        match out.status {
            LpStatus::Optimal => {
                solved = Some(out);
                break;
            }
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(EngineError::Internal(
                    "least-fixpoint program unbounded below".into(),
                ))
            }
        }
    }
    let out = match solved {
        Some(o) => o,
        None => return Ok(Err(LpStatus::Infeasible)),
    };

    let mut value = AbstractValue::bottom(n, width);
    for i in 0..n {
        for p in 0..width {
            let b = match marks[i][p] {
                VarMark::Var(ix) => ExtReal::Finite(out.point[ix]),
                VarMark::Pos => ExtReal::PosInf,
                VarMark::Neg => ExtReal::NegInf,
            };
            value.row_mut(i).set(p, b);
        }
    }
    Ok(Ok(value))
}

/// The policy-iteration loop; see the module docs for the step structure.
pub fn policy_iterate(
    sys: &EquationSystem,
    cfg: &EngineConfig,
) -> Result<IterationTrace, EngineError> {
    let t0 = Instant::now();
    let mut timings = PhaseTimings::default();
    let mut policy = choose_initial_policy(sys, cfg)?;
    let mut steps = Vec::new();
    let mut prev_w: Option<AbstractValue> = None;
    let mut monotonicity_violated = false;
    let mut improvements = 0usize;
    let mut rounds = 0usize;

    loop {
        let step_start = Instant::now();
        rounds += 1;

        // closed-form values of the current policy
        let values = policy_value_table(sys, &policy, &cfg.value_tols)?;
        for (i, row) in values.iter().enumerate() {
            if let Some(row) = row {
                let bad: Vec<(usize, usize)> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_finite())
                    .map(|(k, _)| (i, k))
                    .collect();
                if !bad.is_empty() {
                    return Err(EngineError::InitialPolicy(bad));
                }
            }
        }

        // least fixpoint of the policy's affine map
        let tl = Instant::now();
        let u = match least_fixpoint_lp(sys, &policy, &values, cfg.eps_margin)? {
            Ok(u) => u,
            Err(_) => {
                // infeasibility at the first round means the initial policy
                // admits no finite prefixpoint; later rounds can only hit it
                // through multiplier noise, and the previous iterate is
                // already a verified safe stopping point
                return match prev_w {
                    None => Err(EngineError::InitialPolicyInfeasible),
                    Some(prev) => finish_policy_run(
                        sys,
                        cfg,
                        PolicyRunState {
                            steps,
                            w: prev,
                            rounds,
                            improvements,
                            monotonicity_violated,
                        },
                        timings,
                        t0,
                        StopReason::NoImprovement,
                    ),
                };
            }
        };
        timings.lp += tl.elapsed();

        // close it
        let tc = Instant::now();
        let w = if cfg.closure_each_step {
            AbstractValue(u.0.iter().map(|r| closure(r, sys.templates(), &cfg.sdp)).collect())
        } else {
            u.clone()
        };
        timings.closure += tc.elapsed();

        if let Some(prev) = &prev_w {
            if !w.le_within(prev, safety_slack(prev, cfg)) {
                monotonicity_violated = true;
            }
        }

        // Slater gate: an unverified strict-feasibility point stops the
        // improvement loop at the current (safe) value
        let checks = crate::relax::slater_check(sys, &w, cfg.slater_slack);
        if checks.iter().any(|ok| !ok) {
            steps.push(IterationStep {
                index: rounds,
                value: w.clone(),
                lp_value: Some(u),
                policy: Some(policy.clone()),
                wall: step_start.elapsed(),
            });
            return finish_policy_run(
                sys,
                cfg,
                PolicyRunState { steps, w, rounds, improvements, monotonicity_violated },
                timings,
                t0,
                StopReason::SlaterStop,
            );
        }

        // relaxed sweep and the fixpoint test
        let tr = Instant::now();
        let (fw, candidates) = evaluate_relaxed_with(sys, &w, &cfg.sdp, cfg.sweep_mode)?;
        timings.relax += tr.elapsed();

        steps.push(IterationStep {
            index: rounds,
            value: w.clone(),
            lp_value: Some(u),
            policy: Some(policy.clone()),
            wall: step_start.elapsed(),
        });

        if fw.approx_eq(&w, cfg.fix_atol, cfg.fix_rtol) {
            timings.total = t0.elapsed();
            return Ok(IterationTrace {
                steps,
                status: RunStatus::Fixpoint,
                value: w,
                iterations: rounds,
                improvements,
                monotonicity_violated,
                timings,
            });
        }
        // on entries where the sweep differs it must decrease
        if !fw.le_within(&w, safety_slack(&w, cfg)) {
            monotonicity_violated = true;
        }

        if rounds >= cfg.max_iters {
            return finish_policy_run(
                sys,
                cfg,
                PolicyRunState { steps, w, rounds, improvements, monotonicity_violated },
                timings,
                t0,
                StopReason::MaxIters,
            );
        }

        // improve
        match extract_policy(sys, &candidates, Some(&policy), &cfg.value_tols) {
            Ok(next) if next != policy => {
                policy = next;
                improvements += 1;
                prev_w = Some(w);
            }
            _ => {
                return finish_policy_run(
                    sys,
                    cfg,
                    PolicyRunState { steps, w, rounds, improvements, monotonicity_violated },
                    timings,
                    t0,
                    StopReason::NoImprovement,
                )
            }
        }
    }
}

struct PolicyRunState {
    steps: Vec<IterationStep>,
    w: AbstractValue,
    rounds: usize,
    improvements: usize,
    monotonicity_violated: bool,
}

fn finish_policy_run(
    sys: &EquationSystem,
    cfg: &EngineConfig,
    state: PolicyRunState,
    mut timings: PhaseTimings,
    t0: Instant,
    reason: StopReason,
) -> Result<IterationTrace, EngineError> {
    // verify safety of the stopping point with one plain sweep
    let (fw, _) = evaluate_relaxed_with(sys, &state.w, &cfg.sdp, cfg.sweep_mode)?;
    let status = if fw.approx_eq(&state.w, cfg.fix_atol, cfg.fix_rtol) {
        RunStatus::Fixpoint
    } else if fw.le_within(&state.w, safety_slack(&state.w, cfg)) {
        RunStatus::Postfixpoint(reason)
    } else {
        RunStatus::NotConverged
    };
    timings.total = t0.elapsed();
    Ok(IterationTrace {
        steps: state.steps,
        status,
        value: state.w,
        iterations: state.rounds,
        improvements: state.improvements,
        monotonicity_violated: state.monotonicity_violated,
        timings,
    })
}

/// Candidate multiplier choices for one (coordinate, template) slot, in
/// preference order: guard first on tests, then the unit choices, then
/// nothing.
fn guard_candidates(width: usize, template: usize, is_test: bool) -> Vec<PolicyEntry> {
    let mut out = Vec::new();
    if is_test {
        let mut e = PolicyEntry::zero(width, true);
        e.mu = Some(1.0);
        out.push(e);
        let mut e = PolicyEntry::unit(width, template, true);
        e.mu = Some(1.0);
        out.push(e);
    }
    out.push(PolicyEntry::unit(width, template, is_test));
    for q in 0..width {
        if q != template {
            out.push(PolicyEntry::unit(width, q, is_test));
            if is_test {
                let mut e = PolicyEntry::unit(width, q, true);
                e.mu = Some(1.0);
                out.push(e);
            }
        }
    }
    out.push(PolicyEntry::zero(width, is_test));
    out
}

fn guards_policy(sys: &EquationSystem, tols: &ValueTols) -> Result<Policy, Vec<(usize, usize)>> {
    let width = sys.template_count();
    let mut entries: Vec<Option<Vec<PolicyEntry>>> = vec![None; sys.len()];
    let mut failures = Vec::new();
    for i in 0..sys.len() {
        let (map, guard) = match sys.coord(i) {
            CoordinateKind::Assign { map, .. } => (map, None),
            CoordinateKind::Test { map, guard, .. } => (map, Some(guard)),
            _ => continue,
        };
        let mut coord_entries = Vec::with_capacity(width);
        for k in 0..width {
            let objective = match map.compose(&sys.templates()[k]) {
                Ok(o) => o,
                Err(_) => {
                    failures.push((i, k));
                    coord_entries.push(PolicyEntry::zero(width, guard.is_some()));
                    continue;
                }
            };
            let mut found = None;
            for cand in guard_candidates(width, k, guard.is_some()) {
                let mut constraints: Vec<(&QuadraticForm, f64)> = sys
                    .templates()
                    .iter()
                    .zip(cand.lambda.iter().copied())
                    .collect();
                if let Some(r) = guard {
                    constraints.push((r, cand.mu.unwrap_or(0.0)));
                }
                if crate::quadforms::policy_value(&objective, &constraints, tols).is_finite() {
                    found = Some(cand);
                    break;
                }
            }
            match found {
                Some(c) => coord_entries.push(c),
                None => {
                    failures.push((i, k));
                    coord_entries.push(PolicyEntry::zero(width, guard.is_some()));
                }
            }
        }
        entries[i] = Some(coord_entries);
    }
    if failures.is_empty() {
        Ok(Policy { entries })
    } else {
        Err(failures)
    }
}

/// Resolve the configured initial policy; all three sources end in an
/// admissibility verification.
pub fn choose_initial_policy(
    sys: &EquationSystem,
    cfg: &EngineConfig,
) -> Result<Policy, EngineError> {
    let verify = |policy: Policy| -> Result<Policy, EngineError> {
        let table = policy_value_table(sys, &policy, &cfg.value_tols)?;
        let mut bad = Vec::new();
        for (i, row) in table.iter().enumerate() {
            if let Some(row) = row {
                for (k, v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        bad.push((i, k));
                    }
                }
            }
        }
        if bad.is_empty() {
            Ok(policy)
        } else {
            Err(EngineError::InitialPolicy(bad))
        }
    };

    match &cfg.initial_policy {
        InitialPolicy::Given(p) => verify(p.clone()),
        InitialPolicy::FromGuards => {
            guards_policy(sys, &cfg.value_tols).map_err(EngineError::InitialPolicy)
        }
        InitialPolicy::FromKleeneWarmup(k) => {
            let mut warm_cfg = cfg.clone();
            warm_cfg.max_iters = (*k).max(1);
            warm_cfg.accel.enabled = true;
            let warm = kleene(sys, &warm_cfg)?;
            let (_, candidates) =
                evaluate_relaxed_with(sys, &warm.value, &cfg.sdp, cfg.sweep_mode)?;
            match extract_policy(sys, &candidates, None, &cfg.value_tols) {
                Ok(p) => verify(p),
                Err(_) => {
                    // fall back slot-wise on the guard cascade
                    let guards = guards_policy(sys, &cfg.value_tols)
                        .map_err(EngineError::InitialPolicy)?;
                    let merged =
                        extract_policy(sys, &candidates, Some(&guards), &cfg.value_tols)
                            .map_err(|_| EngineError::InitialPolicy(vec![]))?;
                    verify(merged)
                }
            }
        }
    }
}

/// Run the configured method.
pub fn run(sys: &EquationSystem, cfg: &EngineConfig) -> Result<IterationTrace, EngineError> {
    match cfg.method {
        Method::Kleene => kleene(sys, cfg),
        Method::Policy => policy_iterate(sys, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_schedule_is_outward() {
        assert_eq!(round_up_significant(3.4969, 2), 3.5);
        assert_eq!(round_up_significant(2.31, 1), 3.0);
        assert_eq!(round_up_significant(4.2, 0), 5.0);
        assert_eq!(round_up_significant(-2.34, 0), -2.0);
        assert_eq!(round_up_125(4.2), 5.0);
        assert_eq!(round_up_125(7.0), 10.0);
        assert!((round_up_125(0.03) - 0.05).abs() < 1e-15);
        assert_eq!(round_up_125(-2.34), -2.0);
        assert_eq!(round_up_125(-0.7), -0.5);
        // never decreases
        for x in [0.123, 1.0, 9.99, -0.02, -123.4, 5e-7] {
            for j in 0..11 {
                assert!(accel_round(x, j) >= x - 1e-15, "x {x} pos {j}");
            }
        }
    }
}
