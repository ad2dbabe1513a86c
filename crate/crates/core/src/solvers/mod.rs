//! In-repo convex solvers.
//!
//! The analyzer needs exactly two: a dense semidefinite solver for the
//! min-eta linear matrix inequalities produced by the relaxation, and a
//! linear-programming solver for the per-policy least fixpoints. Both are
//! deterministic: fixed iteration order, no randomized pivoting.

mod dump;
mod lp;
mod sdp;
mod subgrad;

pub use dump::{read_sdp_problem, write_sdp_problem};
pub use lp::{solve_lp, LpOutcome, LpStatus};
pub use sdp::solve_sdp;
pub use subgrad::reference_min_eta;

use crate::linalg::Mat;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("solver did not converge: {0}")]
    NumericalFailure(String),
    #[error("malformed problem: {0}")]
    BadProblem(String),
    #[error("io error: {0}")]
    Io(String),
}

/// `min c'z  s.t.  F0 + sum_j z_j G_j <= 0` (Loewner order), with
/// `z_j >= 0` wherever `sign_constrained[j]` holds.
///
/// By convention variable 0 is the bound eta being minimized, but the solver
/// treats the data generically.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub f0: Mat,
    pub blocks: Vec<Mat>,
    pub objective: Vec<f64>,
    pub sign_constrained: Vec<bool>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.f0.rows();
        if self.f0.cols() != n {
            return Err(SolverError::BadProblem("constant block not square".into()));
        }
        if self.blocks.len() != self.objective.len()
            || self.blocks.len() != self.sign_constrained.len()
        {
            return Err(SolverError::BadProblem("variable metadata lengths disagree".into()));
        }
        for g in &self.blocks {
            if g.rows() != n || g.cols() != n {
                return Err(SolverError::BadProblem("variable block of wrong size".into()));
            }
        }
        let finite = self.f0.data().iter().all(|v| v.is_finite())
            && self.blocks.iter().all(|g| g.data().iter().all(|v| v.is_finite()))
            && self.objective.iter().all(|v| v.is_finite());
        if !finite {
            return Err(SolverError::BadProblem("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// The LMI left-hand side at a point.
    pub fn lmi_at(&self, z: &[f64]) -> Mat {
        let mut m = self.f0.clone();
        for (g, &zj) in self.blocks.iter().zip(z) {
            m.axpy(zj, g);
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Result of one SDP solve. When `status` is `Optimal` the point is
/// feasible within `feas_tol` and the duality-gap estimate is below
/// `gap_tol`; multipliers are clamped to be nonnegative.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: SdpStatus,
    pub value: f64,
    pub point: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
}

/// Tolerances and limits shared by every SDP solve.
#[derive(Clone, Debug)]
pub struct SdpOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_newton_iters: usize,
    /// Hard cap on the LMI block size; the analyzer is meant for small
    /// dense problems only.
    pub max_block: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { feas_tol: 1e-7, gap_tol: 1e-7, max_newton_iters: 200, max_block: 64 }
    }
}

/// `min c'x  s.t.  A x <= b` with free variables.
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl LpProblem {
    pub fn validate(&self) -> Result<(), SolverError> {
        let nv = self.objective.len();
        if self.rows.len() != self.rhs.len() {
            return Err(SolverError::BadProblem("row/rhs count mismatch".into()));
        }
        for r in &self.rows {
            if r.len() != nv {
                return Err(SolverError::BadProblem("row of wrong arity".into()));
            }
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.rhs.iter().all(|v| v.is_finite())
            && self.rows.iter().all(|r| r.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(SolverError::BadProblem("non-finite coefficient".into()));
        }
        Ok(())
    }
}
