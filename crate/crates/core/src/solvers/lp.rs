//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `min c'x s.t. A x <= b` with free variables by the textbook
//! split x = u - w, u, w >= 0. The per-policy least-fixpoint programs have
//! at most a few hundred variables, so a dense tableau is entirely
//! adequate, and Bland's anti-cycling rule keeps the pivoting
//! deterministic. Accumulated elimination noise is kept in check by
//! refactorizing the tableau from the original data: periodically, and
//! always before believing an unbounded or infeasible verdict.

use super::{LpProblem, SolverError};
use crate::linalg::{lu_solve, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub value: f64,
    pub point: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-10;
/// Reduced costs above this are treated as nonnegative. Coarser than the
/// pivot eligibility cutoff so that elimination noise cannot masquerade as
/// an improving column.
const ENTER_TOL: f64 = 1e-7;
/// Rows violated by less than this are treated as satisfied; the outcome
/// contract only promises feasibility to 1e-8.
const FEAS_EPS: f64 = 1e-8;
const MAX_PIVOTS: usize = 200_000;
const REFRESH_EVERY: usize = 64;

struct Tableau {
    /// working rows, each `cols + 1` wide (last entry is the rhs)
    t: Vec<Vec<f64>>,
    cols: usize,
    basis: Vec<usize>,
    /// immutable problem data for refactorization
    orig: Vec<Vec<f64>>,
    orig_rhs: Vec<f64>,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[row][col];
        debug_assert!(piv.abs() > PIVOT_TOL);
        let inv = 1.0 / piv;
        for v in self.t[row].iter_mut() {
            *v *= inv;
        }
        let prow = self.t[row].clone();
        for (r, trow) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = trow[col];
            if f == 0.0 {
                continue;
            }
            for (v, p) in trow.iter_mut().zip(&prow) {
                *v -= f * p;
            }
        }
        self.basis[row] = col;
    }

    /// Rebuild the working rows from the original data and the current
    /// basis: `T = B^{-1} A`, `rhs = B^{-1} b`. Returns false when the
    /// basis matrix is numerically singular (the old tableau stays).
    fn refactorize(&mut self) -> bool {
        let m = self.t.len();
        let mut bmat = Mat::zeros(m, m);
        for (j, &col) in self.basis.iter().enumerate() {
            for r in 0..m {
                bmat.set(r, j, self.orig[r][col]);
            }
        }
        // invert column by column
        let mut binv_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            match lu_solve(&bmat, &e) {
                Some(col) => binv_cols.push(col),
                None => return false,
            }
        }
        // fresh rows: row r of B^{-1} times original data
        let mut fresh = vec![vec![0.0; self.cols + 1]; m];
        for r in 0..m {
            for k in 0..m {
                let w = binv_cols[k][r];
                if w == 0.0 {
                    continue;
                }
                for c in 0..self.cols {
                    fresh[r][c] += w * self.orig[k][c];
                }
                fresh[r][self.cols] += w * self.orig_rhs[k];
            }
        }
        self.t = fresh;
        true
    }

    /// Reduced costs of `obj` under the current basis.
    fn priced(&self, obj: &[f64]) -> Vec<f64> {
        let mut out = obj.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let f = out[b];
            if f != 0.0 {
                for (o, v) in out.iter_mut().zip(&self.t[r]) {
                    *o -= f * v;
                }
            }
        }
        out
    }

    /// Minimize `obj` over `allowed` columns. Bland's rule throughout.
    fn run(&mut self, obj: &[f64], allowed: &[bool]) -> Result<LpStatus, SolverError> {
        let mut costs = self.priced(obj);
        let mut since_refresh = 0usize;
        let mut pivots = 0usize;
        loop {
            if pivots > MAX_PIVOTS {
                return Err(SolverError::NumericalFailure("simplex pivot limit".into()));
            }
            // Bland: smallest index with negative reduced cost
            let enter = allowed
                .iter()
                .enumerate()
                .find(|(j, &a)| a && costs[*j] < -ENTER_TOL)
                .map(|(j, _)| j);
            let enter = match enter {
                Some(j) => j,
                None => return Ok(LpStatus::Optimal),
            };
            // ratio test; among minimal ratios prefer the largest pivot
            // element (a tiny pivot blows the tableau up), then the
            // smallest basis variable
            let mut min_ratio = f64::INFINITY;
            for r in 0..self.t.len() {
                let a = self.t[r][enter];
                if a > PIVOT_TOL {
                    min_ratio = min_ratio.min(self.rhs(r).max(0.0) / a);
                }
            }
            let mut leave: Option<usize> = None;
            if min_ratio.is_finite() {
                let cutoff = min_ratio + 1e-9 * (1.0 + min_ratio.abs());
                for r in 0..self.t.len() {
                    let a = self.t[r][enter];
                    if a > PIVOT_TOL && self.rhs(r).max(0.0) / a <= cutoff {
                        match leave {
                            None => leave = Some(r),
                            Some(lr) => {
                                let cur = self.t[lr][enter];
                                if a > 4.0 * cur
                                    || (a > 0.25 * cur && self.basis[r] < self.basis[lr])
                                {
                                    leave = Some(r);
                                }
                            }
                        }
                    }
                }
            }
            let leave = match leave {
                Some(l) => l,
                None => {
                    // distrust the verdict until the tableau is fresh
                    if since_refresh > 0 && self.refactorize() {
                        since_refresh = 0;
                        costs = self.priced(obj);
                        continue;
                    }
                    return Ok(LpStatus::Unbounded);
                }
            };
            self.pivot(leave, enter);
            pivots += 1;
            since_refresh += 1;
            if since_refresh >= REFRESH_EVERY {
                if self.refactorize() {
                    since_refresh = 0;
                    costs = self.priced(obj);
                    continue;
                }
                since_refresh = 0;
            }
            let f = costs[enter];
            if f != 0.0 {
                for (o, v) in costs.iter_mut().zip(&self.t[leave]) {
                    *o -= f * v;
                }
            }
        }
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpOutcome, SolverError> {
    problem.validate()?;
    let nv = problem.objective.len();
    let nr = problem.rows.len();

    // columns: u (nv), w (nv), slack (nr), artificial (appended as needed)
    let base_cols = 2 * nv + nr;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(nr);
    let mut basis = Vec::with_capacity(nr);
    let mut artificials = Vec::new();

    for (r, (arow, &b)) in problem.rows.iter().zip(&problem.rhs).enumerate() {
        // a hair-negative right-hand side stays unflipped: the slack starts
        // at a tolerated infeasibility instead of costing an artificial at
        // degenerate pivot scale
        let flip = b < -FEAS_EPS;
        let b = if !flip && b < 0.0 { 0.0 } else { b };
        let sgn = if flip { -1.0 } else { 1.0 };
        let mut row = vec![0.0; base_cols + 1];
        for (j, &a) in arow.iter().enumerate() {
            row[j] = sgn * a;
            row[nv + j] = -sgn * a;
        }
        row[2 * nv + r] = sgn; // slack
        row[base_cols] = sgn * b;
        if flip {
            artificials.push(r);
        }
        rows.push(row);
        basis.push(2 * nv + r); // provisional; fixed below for flipped rows
    }

    let n_art = artificials.len();
    let cols = base_cols + n_art;
    for row in rows.iter_mut() {
        let rhs = row.pop().expect("rhs present");
        row.extend(std::iter::repeat(0.0).take(n_art));
        row.push(rhs);
    }
    for (k, &r) in artificials.iter().enumerate() {
        rows[r][base_cols + k] = 1.0;
        basis[r] = base_cols + k;
    }

    let orig: Vec<Vec<f64>> = rows.iter().map(|r| r[..cols].to_vec()).collect();
    let orig_rhs: Vec<f64> = rows.iter().map(|r| r[cols]).collect();
    let mut tab = Tableau { t: rows, cols, basis, orig, orig_rhs };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for k in 0..n_art {
            phase1[base_cols + k] = 1.0;
        }
        let allowed: Vec<bool> = (0..cols).map(|_| true).collect();
        let status = tab.run(&phase1, &allowed)?;
        if status == LpStatus::Unbounded {
            // bounded below by zero in exact arithmetic; reaching this means
            // the tableau degraded numerically
            return Err(SolverError::NumericalFailure("phase 1 lost boundedness".into()));
        }
        // infeasible iff some artificial stays basic at a positive level
        let resid: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= base_cols)
            .map(|(r, _)| tab.rhs(r).max(0.0))
            .sum();
        if resid > 1e-7 {
            return Ok(LpOutcome { status: LpStatus::Infeasible, value: 0.0, point: vec![] });
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..tab.t.len() {
            if tab.basis[r] >= base_cols {
                if let Some(c) = (0..base_cols).find(|&c| tab.t[r][c].abs() > PIVOT_TOL) {
                    tab.pivot(r, c);
                }
            }
        }
    }

    let mut obj = vec![0.0; cols];
    for j in 0..nv {
        obj[j] = problem.objective[j];
        obj[nv + j] = -problem.objective[j];
    }
    let allowed: Vec<bool> = (0..cols).map(|c| c < base_cols).collect();
    let status = tab.run(&obj, &allowed)?;
    if status == LpStatus::Unbounded {
        return Ok(LpOutcome { status, value: f64::NEG_INFINITY, point: vec![] });
    }

    let mut x = vec![0.0; nv];
    for (r, &b) in tab.basis.iter().enumerate() {
        let v = tab.rhs(r);
        if b < nv {
            x[b] += v;
        } else if b < 2 * nv {
            x[b - nv] -= v;
        }
    }
    let value = problem.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpOutcome { status: LpStatus::Optimal, value, point: x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_with_lower_bound() {
        // min z s.t. z >= 3
        let p = LpProblem { objective: vec![1.0], rows: vec![vec![-1.0]], rhs: vec![-3.0] };
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn two_variable_corner() {
        // min -x - y s.t. x + y <= 4, x <= 3, y <= 2: optimum on x + y = 4
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            rows: vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            rhs: vec![4.0, 3.0, 2.0],
        };
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value + 4.0).abs() < 1e-9, "value {}", out.value);
        assert!(out.point[0] + out.point[1] <= 4.0 + 1e-8);
    }

    #[test]
    fn detects_infeasible() {
        // x <= -1 and -x <= -1 cannot both hold
        let p = LpProblem {
            objective: vec![1.0],
            rows: vec![vec![1.0], vec![-1.0]],
            rhs: vec![-1.0, -1.0],
        };
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let p = LpProblem { objective: vec![1.0], rows: vec![vec![1.0]], rhs: vec![5.0] };
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_phase_one() {
        // min x + y s.t. x + y >= 2, x - y <= 1: value 2
        let p = LpProblem {
            objective: vec![1.0, 1.0],
            rows: vec![vec![-1.0, -1.0], vec![1.0, -1.0]],
            rhs: vec![-2.0, 1.0],
        };
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value - 2.0).abs() < 1e-9);
    }
}
