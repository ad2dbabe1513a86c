//! One Shor relaxation: an upper bound on `sup { f(x) | g_i(x) <= 0 }` for
//! quadratic data, obtained as `min eta` subject to
//! `M(f) + eta N(-1) - sum_i lambda_i M(g_i) <= 0`, `lambda >= 0`.
//!
//! The multipliers at the optimum are the Lagrange duals of the original
//! quadratic problem; the fixpoint engines reuse them as policies.

use crate::domain::ExtReal;
use crate::linalg::{sym_eigen, Mat};
use crate::quadforms::{
    compose_affine, n_matrix, policy_value, shor_matrix, AffineMap, QuadraticForm, ValueTols,
};
use crate::solvers::{solve_sdp, SdpOptions, SdpProblem, SdpStatus, SolverError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShorStatus {
    /// Finite optimum; `bound` and `multipliers` are valid.
    Bounded,
    /// No multiplier choice closes the LMI: the supremum is unbounded above.
    Infeasible,
    /// The dual decreases without bound (empty constraint set).
    Unbounded,
    /// The solver gave up; callers fall back soundly.
    Failure,
}

#[derive(Clone, Debug)]
pub struct ShorOutcome {
    pub status: ShorStatus,
    pub bound: f64,
    pub multipliers: Vec<f64>,
    pub gap: f64,
}

/// Assemble the LMI for `sup { objective | g_i <= 0 }`.
pub fn assemble(objective: &QuadraticForm, constraints: &[&QuadraticForm]) -> SdpProblem {
    let size = objective.dim() + 1;
    let mut blocks = Vec::with_capacity(1 + constraints.len());
    let mut objective_row = Vec::with_capacity(1 + constraints.len());
    let mut signs = Vec::with_capacity(1 + constraints.len());
    blocks.push(n_matrix(-1.0, size).into_mat());
    objective_row.push(1.0);
    signs.push(false);
    for g in constraints {
        debug_assert_eq!(g.dim(), objective.dim());
        blocks.push(shor_matrix(g).into_mat().scale(-1.0));
        objective_row.push(0.0);
        signs.push(true);
    }
    SdpProblem {
        f0: shor_matrix(objective).into_mat(),
        blocks,
        objective: objective_row,
        sign_constrained: signs,
    }
}

/// Per-variable magnitude estimates implied by the constraint set, used to
/// restate the problem in natural units before assembling the LMI. The
/// optimal value and the multipliers are invariant under this substitution;
/// the conditioning of the moment matrix is not.
fn variable_scales(dim: usize, constraints: &[&QuadraticForm]) -> Vec<f64> {
    let mut hi = vec![f64::INFINITY; dim];
    let mut lo = vec![f64::NEG_INFINITY; dim];
    let mut radius = vec![f64::INFINITY; dim];
    for g in constraints {
        let a = g.a();
        let b = g.b();
        let c = g.c();
        if g.is_linear() {
            // single-variable facet: one-sided interval bound
            let nz: Vec<usize> = (0..dim).filter(|&i| b[i] != 0.0).collect();
            if let [i] = nz[..] {
                let bound = -c / b[i];
                if b[i] > 0.0 {
                    hi[i] = hi[i].min(bound);
                } else {
                    lo[i] = lo[i].max(bound);
                }
            }
            continue;
        }
        // single-variable parabola: a x^2 + b x + c <= 0 caps |x|
        let nz: Vec<usize> = (0..dim)
            .filter(|&i| {
                (0..dim).any(|j| a.get(i, j) != 0.0 || a.get(j, i) != 0.0) || b[i] != 0.0
            })
            .collect();
        if let [i] = nz[..] {
            let aii = a.get(i, i);
            if aii > 0.0 {
                let mid = -b[i] / (2.0 * aii);
                let disc = mid * mid - c / aii;
                if disc >= 0.0 {
                    let r = mid.abs() + disc.sqrt();
                    radius[i] = radius[i].min(r);
                }
            }
            continue;
        }
        if c < 0.0 && b.iter().all(|&v| v == 0.0) {
            let off_diag_free = (0..dim)
                .all(|i| (0..dim).all(|j| i == j || a.get(i, j) == 0.0));
            if off_diag_free {
                // nonnegative diagonal: each charged variable is capped on
                // its own, zero rows constrain nothing
                for (i, ri) in radius.iter_mut().enumerate() {
                    let aii = a.get(i, i);
                    if aii > 0.0 {
                        *ri = ri.min((-c / aii).sqrt());
                    }
                }
            } else {
                // positive-definite level set caps the whole state
                let emin = sym_eigen(a).min_value();
                if emin > 0.0 {
                    let r = (-c / emin).sqrt();
                    for ri in radius.iter_mut() {
                        *ri = ri.min(r);
                    }
                }
            }
        }
    }
    (0..dim)
        .map(|i| {
            let mut r = radius[i];
            if hi[i].is_finite() && lo[i].is_finite() {
                r = r.min(hi[i].abs().max(lo[i].abs()));
            }
            if r.is_finite() {
                r.clamp(1e-3, 1e9).max(1e-3)
            } else {
                1.0
            }
        })
        .collect()
}

/// The exact value of a fixed multiplier choice: `sup_x objective(x) -
/// sum_i lam_i g_i(x)`, finite iff the residual quadratic is negative
/// semidefinite with its linear part in the image. Any nonnegative
/// multipliers yield a sound upper bound by weak duality, so certifying the
/// solver's (clamped) multipliers algebraically removes the solver's own
/// slop from the reported bound.
fn certify(
    objective: &QuadraticForm,
    constraints: &[&QuadraticForm],
    lam: &[f64],
) -> Option<f64> {
    if lam.len() != constraints.len() {
        return None;
    }
    let pairs: Vec<(&QuadraticForm, f64)> =
        constraints.iter().copied().zip(lam.iter().copied()).collect();
    policy_value(objective, &pairs, &ValueTols::default()).finite()
}

/// Solve the relaxation; multiplier order follows `constraints`.
pub fn relax_bound(
    objective: &QuadraticForm,
    constraints: &[&QuadraticForm],
    opts: &SdpOptions,
) -> ShorOutcome {
    // without constraints the value is the unconstrained supremum, known in
    // closed form; the LMI would be degenerate anyway
    if constraints.is_empty() {
        return match policy_value(objective, &[], &ValueTols::default()) {
            ExtReal::Finite(v) => {
                ShorOutcome { status: ShorStatus::Bounded, bound: v, multipliers: vec![], gap: 0.0 }
            }
            _ => ShorOutcome {
                status: ShorStatus::Infeasible,
                bound: f64::INFINITY,
                multipliers: vec![],
                gap: f64::INFINITY,
            },
        };
    }
    // restate in natural units: x = D x'
    let dim = objective.dim();
    let scales = variable_scales(dim, constraints);
    let problem = if scales.iter().all(|&s| s == 1.0) {
        assemble(objective, constraints)
    } else {
        let subst = AffineMap::new(Mat::diag(&scales), vec![0.0; dim]);
        let obj_s = compose_affine(objective, &subst).expect("square substitution");
        let cons_s: Vec<QuadraticForm> = constraints
            .iter()
            .map(|g| compose_affine(g, &subst).expect("square substitution"))
            .collect();
        let refs: Vec<&QuadraticForm> = cons_s.iter().collect();
        assemble(&obj_s, &refs)
    };
    let out = match solve_sdp(&problem, opts) {
        Ok(out) => out,
        Err(_) => {
            return ShorOutcome {
                status: ShorStatus::Failure,
                bound: f64::INFINITY,
                multipliers: vec![],
                gap: f64::INFINITY,
            }
        }
    };
    match out.status {
        SdpStatus::Optimal | SdpStatus::NumericalFailure => {
            // every certifiable multiplier choice is a sound bound; take
            // the best among the solver's duals and the unit choices
            let mut best: Option<(f64, Vec<f64>, f64)> = None;
            let mut consider = |lam: Vec<f64>, gap: f64| {
                if let Some(v) = certify(objective, constraints, &lam) {
                    if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                        best = Some((v, lam, gap));
                    }
                }
            };
            if !out.point.is_empty() && out.value.is_finite() {
                let lam: Vec<f64> = out.point.iter().skip(1).map(|&v| v.max(0.0)).collect();
                consider(lam, if out.gap.is_finite() { out.gap } else { 0.0 });
            }
            for k in 0..constraints.len() {
                for scale in [1.0, 2.0, 0.5, 8.0] {
                    let mut cand = vec![0.0; constraints.len()];
                    cand[k] = scale;
                    consider(cand, f64::INFINITY);
                }
            }
            if let Some((bound, multipliers, gap)) = best {
                return ShorOutcome { status: ShorStatus::Bounded, bound, multipliers, gap };
            }
            if out.status == SdpStatus::Optimal {
                // nothing certified on a borderline block: fall back on the
                // solver value shifted to the sound side by its gap
                let lam: Vec<f64> = out.point.iter().skip(1).map(|&v| v.max(0.0)).collect();
                ShorOutcome {
                    status: ShorStatus::Bounded,
                    bound: out.value + out.gap.max(0.0),
                    multipliers: lam,
                    gap: out.gap,
                }
            } else {
                ShorOutcome {
                    status: ShorStatus::Failure,
                    bound: f64::INFINITY,
                    multipliers: vec![],
                    gap: f64::INFINITY,
                }
            }
        }
        SdpStatus::Infeasible => ShorOutcome {
            status: ShorStatus::Infeasible,
            bound: f64::INFINITY,
            multipliers: vec![],
            gap: f64::INFINITY,
        },
        SdpStatus::Unbounded => ShorOutcome {
            status: ShorStatus::Unbounded,
            bound: f64::NEG_INFINITY,
            multipliers: vec![],
            gap: f64::INFINITY,
        },
    }
}

/// Like [`relax_bound`] but surfacing hard errors for callers that must not
/// silently weaken (the box abstraction, the relaxed sweep).
pub fn relax_bound_strict(
    objective: &QuadraticForm,
    constraints: &[&QuadraticForm],
    opts: &SdpOptions,
) -> Result<ShorOutcome, SolverError> {
    let out = relax_bound(objective, constraints, opts);
    if out.status == ShorStatus::Failure {
        Err(SolverError::NumericalFailure("relaxation solve failed".into()))
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    #[test]
    fn rotation_example_bounds() {
        // unit circle mapped through an orthogonal matrix keeps both bounds
        let p1 = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        let p2 = p1.neg();
        let opts = SdpOptions::default();
        // sup p1 under p1 <= 1, p2 <= -1
        let c1 = p1.minus_const(1.0);
        let c2 = p2.minus_const(-1.0);
        let up = relax_bound(&p1, &[&c1, &c2], &opts);
        assert_eq!(up.status, ShorStatus::Bounded);
        assert!((up.bound - 1.0).abs() < 1e-6, "bound {}", up.bound);
        let dn = relax_bound(&p2, &[&c1, &c2], &opts);
        assert_eq!(dn.status, ShorStatus::Bounded);
        assert!((dn.bound + 1.0).abs() < 1e-6, "bound {}", dn.bound);
    }

    #[test]
    fn concave_objective_no_constraints() {
        let obj = QuadraticForm::new(Mat::identity(2).scale(-1.0), vec![0.0; 2], 0.5);
        let out = relax_bound(&obj, &[], &SdpOptions::default());
        assert_eq!(out.status, ShorStatus::Bounded);
        assert!((out.bound - 0.5).abs() < 1e-7);
    }

    #[test]
    fn unbounded_objective_is_infeasible_lmi() {
        let obj = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        let out = relax_bound(&obj, &[], &SdpOptions::default());
        assert_eq!(out.status, ShorStatus::Infeasible);
        assert_eq!(out.bound, f64::INFINITY);
    }
}
