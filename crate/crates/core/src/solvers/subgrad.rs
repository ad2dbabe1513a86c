//! Reference solver for the min-eta LMI problems, used as an independent
//! oracle by the test suite.
//!
//! It never touches the Newton machinery of the interior-point path: for a
//! candidate eta it decides feasibility by running a projected subgradient
//! descent on `lambda -> max_eig(F0 + eta G_eta + sum lambda_k G_k)` over
//! the nonnegative orthant, and wraps a bisection on eta around that test.
//! Slow but simple, and wrong in at most the conservative direction (a
//! missed feasible point only pushes the reported value up).

use super::{SdpProblem, SdpStatus, SolverError};
use crate::linalg::{sym_eigen, Mat};

/// Outcome of the reference solve: the bisected optimal value, or the same
/// status taxonomy as the main solver for degenerate problems.
#[derive(Clone, Debug)]
pub struct ReferenceOutcome {
    pub status: SdpStatus,
    pub value: f64,
}

/// `max_eig` and its subgradient with respect to the multipliers.
fn top_eig(
    f0: &Mat,
    eta: f64,
    g_eta: &Mat,
    gs: &[&Mat],
    lambda: &[f64],
) -> (f64, Vec<f64>) {
    let mut m = f0.clone();
    m.axpy(eta, g_eta);
    for (g, &l) in gs.iter().zip(lambda) {
        if l != 0.0 {
            m.axpy(l, g);
        }
    }
    let e = sym_eigen(&m);
    let n = m.rows();
    let mut u = vec![0.0; n];
    for i in 0..n {
        u[i] = e.vectors.get(i, n - 1);
    }
    let grad: Vec<f64> = gs.iter().map(|g| g.quad_form(&u)).collect();
    (e.max_value(), grad)
}

/// Does any `lambda >= 0` make the LMI negative definite with margin?
/// Returns the multiplier that certifies feasibility.
fn feasible(
    f0: &Mat,
    eta: f64,
    g_eta: &Mat,
    gs: &[&Mat],
    warm: &[f64],
    iters: usize,
) -> Option<Vec<f64>> {
    let mut lambda = warm.to_vec();
    let mut best = f64::INFINITY;
    let mut best_lambda = lambda.clone();
    for _ in 0..iters {
        let (f, grad) = top_eig(f0, eta, g_eta, gs, &lambda);
        if f < best {
            best = f;
            best_lambda = lambda.clone();
        }
        if f < -1e-9 {
            return Some(lambda);
        }
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 < 1e-18 {
            break;
        }
        // Polyak step towards the zero level
        let step = (f + 1e-7) / gnorm2;
        for (l, g) in lambda.iter_mut().zip(&grad) {
            *l = (*l - step * g).max(0.0);
        }
    }
    let (f, _) = top_eig(f0, eta, g_eta, gs, &best_lambda);
    if f < -1e-9 {
        Some(best_lambda)
    } else {
        None
    }
}

/// Bisection on eta for problems of the analyzer's shape: variable 0 is the
/// objective eta, all others are sign-constrained multipliers.
pub fn reference_min_eta(
    problem: &SdpProblem,
    tol: f64,
    feas_iters: usize,
) -> Result<ReferenceOutcome, SolverError> {
    problem.validate()?;
    if problem.objective.first() != Some(&1.0)
        || problem.objective.iter().skip(1).any(|&c| c != 0.0)
        || problem.sign_constrained.first() != Some(&false)
        || problem.sign_constrained.iter().skip(1).any(|&s| !s)
    {
        return Err(SolverError::BadProblem(
            "reference solver expects a min-eta problem with sign-constrained multipliers".into(),
        ));
    }
    let g_eta = &problem.blocks[0];
    let gs: Vec<&Mat> = problem.blocks[1..].iter().collect();
    let scale = 1.0 + problem.f0.frobenius_norm();

    // find a feasible upper end by doubling
    let mut warm = vec![0.0; gs.len()];
    let mut hi = scale;
    let mut hi_ok = false;
    for _ in 0..60 {
        if let Some(l) = feasible(&problem.f0, hi, g_eta, &gs, &warm, feas_iters) {
            warm = l;
            hi_ok = true;
            break;
        }
        hi *= 2.0;
    }
    if !hi_ok {
        return Ok(ReferenceOutcome { status: SdpStatus::Infeasible, value: f64::INFINITY });
    }

    // find an infeasible lower end by doubling downwards
    let mut lo = -scale;
    let mut lo_ok = false;
    for _ in 0..60 {
        if feasible(&problem.f0, lo, g_eta, &gs, &warm, feas_iters).is_none() {
            lo_ok = true;
            break;
        }
        if lo < -1e9 {
            break;
        }
        lo *= 2.0;
    }
    if !lo_ok {
        return Ok(ReferenceOutcome { status: SdpStatus::Unbounded, value: f64::NEG_INFINITY });
    }

    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match feasible(&problem.f0, mid, g_eta, &gs, &warm, feas_iters) {
            Some(l) => {
                warm = l;
                hi = mid;
            }
            None => lo = mid,
        }
    }
    Ok(ReferenceOutcome { status: SdpStatus::Optimal, value: 0.5 * (lo + hi) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadforms::{n_matrix, shor_matrix, QuadraticForm};

    #[test]
    fn bisection_agrees_on_rotation_problem() {
        let p1 = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        let p2 = p1.neg();
        let prob = SdpProblem {
            f0: shor_matrix(&p1).into_mat(),
            blocks: vec![
                n_matrix(-1.0, 3).into_mat(),
                n_matrix(1.0, 3).into_mat().sub(&shor_matrix(&p1).into_mat()),
                n_matrix(-1.0, 3).into_mat().sub(&shor_matrix(&p2).into_mat()),
            ],
            objective: vec![1.0, 0.0, 0.0],
            sign_constrained: vec![false, true, true],
        };
        let out = reference_min_eta(&prob, 1e-6, 400).unwrap();
        assert_eq!(out.status, SdpStatus::Optimal);
        assert!((out.value - 1.0).abs() < 1e-4, "value {}", out.value);
    }
}
