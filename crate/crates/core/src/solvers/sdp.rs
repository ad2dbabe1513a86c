//! Primal-dual interior-point SDP solver on the homogeneous self-dual
//! embedding, with Nesterov-Todd scaling.
//!
//! The problems are tiny — one LMI block of size d+1 plus a handful of sign
//! constraints — so every kernel is dense and built on the Jacobi
//! eigendecomposition. The embedding makes infeasibility and unboundedness
//! observable as tau -> 0 with a Farkas or ray certificate; when neither
//! certificate is convincing the solver reports a numerical failure rather
//! than guessing, which callers treat as a +inf bound.

use super::{SdpOptions, SdpProblem, SdpStatus, SolveOutcome, SolverError};
use crate::linalg::{lu_solve, sym_eigen, Mat, SymEigen};

/// One point of the symmetric cone: an LMI block and nonnegative scalars.
#[derive(Clone, Debug)]
struct ConeVec {
    lmi: Mat,
    diag: Vec<f64>,
}

impl ConeVec {
    fn zeros(n: usize, k: usize) -> Self {
        ConeVec { lmi: Mat::zeros(n, n), diag: vec![0.0; k] }
    }

    fn identity(n: usize, k: usize) -> Self {
        ConeVec { lmi: Mat::identity(n), diag: vec![1.0; k] }
    }

    fn dot(&self, o: &ConeVec) -> f64 {
        self.lmi.dot(&o.lmi) + self.diag.iter().zip(&o.diag).map(|(a, b)| a * b).sum::<f64>()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, s: f64, o: &ConeVec) {
        self.lmi.axpy(s, &o.lmi);
        for (a, b) in self.diag.iter_mut().zip(&o.diag) {
            *a += s * b;
        }
    }

    fn is_finite(&self) -> bool {
        self.lmi.data().iter().all(|v| v.is_finite()) && self.diag.iter().all(|v| v.is_finite())
    }
}

/// Scaled problem data: per-variable cone blocks, right-hand side, objective.
struct ScaledData {
    gs: Vec<ConeVec>,
    h: ConeVec,
    c: Vec<f64>,
    /// z_original[j] = z_scaled[j] * descale[j]
    descale: Vec<f64>,
    n: usize,
    k: usize,
}

fn scale_problem(p: &SdpProblem) -> ScaledData {
    let n = p.f0.rows();
    let m = p.blocks.len();
    let slots: Vec<Option<usize>> = {
        let mut next = 0;
        p.sign_constrained
            .iter()
            .map(|&s| {
                if s {
                    let i = next;
                    next += 1;
                    Some(i)
                } else {
                    None
                }
            })
            .collect()
    };
    let k = slots.iter().flatten().count();

    let sh = (1.0f64).max(p.f0.frobenius_norm());
    let mut gs = Vec::with_capacity(m);
    let mut c = Vec::with_capacity(m);
    let mut descale = Vec::with_capacity(m);
    for j in 0..m {
        let sign_part = if slots[j].is_some() { 1.0 } else { 0.0 };
        // objective variables additionally carry the constant-block scale:
        // their natural magnitude is that of the bound being minimized, and
        // leaving them unscaled inflates the dual corner by s_h, which
        // collapses tau in the embedding
        let obj_part = sh * p.objective[j].abs();
        let sj = (p.blocks[j].frobenius_norm().powi(2) + sign_part)
            .sqrt()
            .max(obj_part)
            .max(1e-12);
        let mut g = ConeVec { lmi: p.blocks[j].scale(1.0 / sj), diag: vec![0.0; k] };
        if let Some(slot) = slots[j] {
            g.diag[slot] = -1.0 / sj;
        }
        gs.push(g);
        c.push(p.objective[j] * sh / sj);
        descale.push(sh / sj);
    }
    let h = ConeVec { lmi: p.f0.scale(-1.0 / sh), diag: vec![0.0; k] };
    ScaledData { gs, h, c, descale, n, k }
}

/// NT scaling of one iterate, kept in factored form.
struct Scaling {
    /// W^{1/2} and its inverse for the LMI block.
    t: Mat,
    t_inv: Mat,
    w: Mat,
    w_inv: Mat,
    /// Eigen pair of the scaled point lambda-hat.
    lam: SymEigen,
    /// Scalar scaling and scaled point per diagonal slot.
    dw: Vec<f64>,
    dlam: Vec<f64>,
}

fn nt_scaling(s: &ConeVec, z: &ConeVec) -> Option<Scaling> {
    let es = sym_eigen(&s.lmi);
    if es.min_value() <= 0.0 {
        return None;
    }
    let s_half = es.assemble(|v| v.sqrt());
    let b = s_half.matmul(&z.lmi).matmul(&s_half);
    let eb = sym_eigen(&b);
    if eb.min_value() <= 0.0 {
        return None;
    }
    let b_inv_half = eb.assemble(|v| 1.0 / v.sqrt());
    let w = s_half.matmul(&b_inv_half).matmul(&s_half).symmetrized();
    let ew = sym_eigen(&w);
    if ew.min_value() <= 0.0 {
        return None;
    }
    let t = ew.assemble(|v| v.sqrt());
    let t_inv = ew.assemble(|v| 1.0 / v.sqrt());
    let w_inv = ew.assemble(|v| 1.0 / v);
    let lam_mat = t_inv.matmul(&s.lmi).matmul(&t_inv).symmetrized();
    let lam = sym_eigen(&lam_mat);
    if lam.min_value() <= 0.0 {
        return None;
    }

    let mut dw = Vec::with_capacity(s.diag.len());
    let mut dlam = Vec::with_capacity(s.diag.len());
    for (&si, &zi) in s.diag.iter().zip(&z.diag) {
        if si <= 0.0 || zi <= 0.0 {
            return None;
        }
        dw.push((si / zi).sqrt());
        dlam.push((si * zi).sqrt());
    }
    Some(Scaling { t, t_inv, w, w_inv, lam, dw, dlam })
}

impl Scaling {
    /// W^{-1} X W^{-1} across the whole cone.
    fn sandwich_winv(&self, x: &ConeVec) -> ConeVec {
        let lmi = self.w_inv.matmul(&x.lmi).matmul(&self.w_inv).symmetrized();
        let diag = x.diag.iter().zip(&self.dw).map(|(v, w)| v / (w * w)).collect();
        ConeVec { lmi, diag }
    }

    /// W X W across the whole cone.
    fn sandwich_w(&self, x: &ConeVec) -> ConeVec {
        let lmi = self.w.matmul(&x.lmi).matmul(&self.w).symmetrized();
        let diag = x.diag.iter().zip(&self.dw).map(|(v, w)| v * (w * w)).collect();
        ConeVec { lmi, diag }
    }

    /// The complementarity target `W^{1/2} Q diag((sigma mu - d^2)/d) Q' W^{1/2}`,
    /// diagonal in the Jordan frame of the scaled point.
    fn target(&self, sigma_mu: f64) -> ConeVec {
        let core = self.lam.assemble(|d| (sigma_mu - d * d) / d);
        let lmi = self.t.matmul(&core).matmul(&self.t).symmetrized();
        let diag = self
            .dlam
            .iter()
            .zip(&self.dw)
            .map(|(l, w)| w * (sigma_mu - l * l) / l)
            .collect();
        ConeVec { lmi, diag }
    }

    /// Largest step keeping `s + alpha ds` (scaled by this point) in the cone.
    fn max_step_s(&self, ds: &ConeVec, s: &ConeVec) -> f64 {
        // scaled direction: lam + alpha * T^{ -1 } ds T^{-1} must stay PD
        let dstilde = self.t_inv.matmul(&ds.lmi).matmul(&self.t_inv).symmetrized();
        let mut alpha = self.lmi_step(&dstilde);
        for (&si, &di) in s.diag.iter().zip(&ds.diag) {
            if di < 0.0 {
                alpha = alpha.min(-si / di);
            }
        }
        alpha
    }

    fn max_step_z(&self, dz: &ConeVec, z: &ConeVec) -> f64 {
        let dztilde = self.t.matmul(&dz.lmi).matmul(&self.t).symmetrized();
        let mut alpha = self.lmi_step(&dztilde);
        for (&zi, &di) in z.diag.iter().zip(&dz.diag) {
            if di < 0.0 {
                alpha = alpha.min(-zi / di);
            }
        }
        alpha
    }

    fn lmi_step(&self, dtilde: &Mat) -> f64 {
        // lam + alpha dtilde > 0  <=>  I + alpha lam^{-1/2} dtilde lam^{-1/2} > 0
        let lam_inv_half = self.lam.assemble(|d| 1.0 / d.sqrt());
        let m = lam_inv_half.matmul(dtilde).matmul(&lam_inv_half).symmetrized();
        let lo = sym_eigen(&m).min_value();
        if lo < 0.0 {
            -1.0 / lo
        } else {
            f64::INFINITY
        }
    }
}

fn apply_g(data: &ScaledData, z: &[f64]) -> ConeVec {
    let mut out = ConeVec::zeros(data.n, data.k);
    for (g, &zj) in data.gs.iter().zip(z) {
        if zj != 0.0 {
            out.axpy(zj, g);
        }
    }
    out
}

fn apply_gt(data: &ScaledData, y: &ConeVec) -> Vec<f64> {
    data.gs.iter().map(|g| g.dot(y)).collect()
}

/// Does variable 0 minimize a pure corner shift? If so the problem can be
/// re-anchored at any eta estimate, which keeps the embedding's tau near one
/// and the de-embedded residuals well conditioned.
fn min_eta_structure(problem: &SdpProblem) -> bool {
    if problem.objective.first() != Some(&1.0)
        || problem.objective.iter().skip(1).any(|&c| c != 0.0)
        || problem.sign_constrained.first() != Some(&false)
    {
        return false;
    }
    let g = &problem.blocks[0];
    if g.get(0, 0) != -1.0 {
        return false;
    }
    let mut off = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            if (i, j) != (0, 0) {
                off = off.max(g.get(i, j).abs());
            }
        }
    }
    off == 0.0
}

/// Solve the LMI minimization. See the module docs for the model.
///
/// Min-eta problems are solved in two anchored rounds: a loose pass
/// estimates the optimum, the constant block is shifted by that estimate,
/// and the tight pass then runs on a problem whose solution is near zero.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> Result<SolveOutcome, SolverError> {
    problem.validate()?;
    if problem.blocks.is_empty() {
        return Err(SolverError::BadProblem("no variables".into()));
    }
    if !min_eta_structure(problem) {
        return solve_once(problem, opts, 0.0);
    }

    let mut shift = 0.0f64;
    let mut work = problem.clone();
    let loose = SdpOptions {
        feas_tol: opts.feas_tol.max(1e-6),
        gap_tol: opts.gap_tol.max(1e-5),
        max_newton_iters: opts.max_newton_iters.min(80),
        ..opts.clone()
    };
    let mut last = None;
    for round in 0..3 {
        let o = if round == 0 { &loose } else { opts };
        let mut out = solve_once(&work, o, shift)?;
        out.value += shift;
        if !out.point.is_empty() {
            out.point[0] += shift;
        }
        match out.status {
            SdpStatus::Infeasible | SdpStatus::Unbounded => return Ok(out),
            SdpStatus::Optimal if round > 0 => return Ok(out),
            SdpStatus::Optimal => {
                // re-anchor at the estimate and solve tightly
                let est = out.value;
                if !est.is_finite() {
                    return Ok(out);
                }
                let delta = est - shift;
                work.f0.add_at(0, 0, -delta);
                shift = est;
                last = Some(out);
            }
            SdpStatus::NumericalFailure => {
                // a failed round gives no trustworthy anchor; one fresh
                // attempt at full tolerance, then give up
                if round > 0 {
                    return Ok(out);
                }
                last = Some(out);
            }
        }
    }
    Ok(last.expect("at least one round ran"))
}

fn solve_once(
    problem: &SdpProblem,
    opts: &SdpOptions,
    value_offset: f64,
) -> Result<SolveOutcome, SolverError> {
    if problem.f0.rows() > opts.max_block {
        return Err(SolverError::BadProblem(format!(
            "LMI block {} exceeds configured maximum {}",
            problem.f0.rows(),
            opts.max_block
        )));
    }

    let data = scale_problem(problem);
    let m = data.gs.len();
    let nu = (data.n + data.k) as f64;

    let mut z = vec![0.0; m];
    let mut s = ConeVec::identity(data.n, data.k);
    let mut zh = ConeVec::identity(data.n, data.k);
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let hnorm = data.h.norm();
    let cnorm = data.c.iter().map(|v| v * v).sum::<f64>().sqrt();

    let descale_point = |z: &[f64]| -> Vec<f64> {
        z.iter().zip(&data.descale).map(|(v, d)| v * d).collect()
    };
    let objective_of = |zp: &[f64]| -> f64 {
        problem.objective.iter().zip(zp).map(|(c, z)| c * z).sum()
    };

    let mut best_value = f64::INFINITY;
    let mut best_point = vec![0.0; m];
    let mut best_merit = f64::INFINITY;
    // best iterate good enough to fall back on (within BEST_ACCEPT of the
    // targets) when the iteration hits the floating-point floor
    let mut best_opt: Option<SolveOutcome> = None;
    let mut best_opt_merit = f64::INFINITY;
    let mut stall = 0usize;
    const BEST_ACCEPT: f64 = 10.0;

    for iter in 0..opts.max_newton_iters {
        // residuals
        let gz = apply_g(&data, &z);
        let mut r_p = gz.clone();
        r_p.axpy(1.0, &s);
        r_p.axpy(-tau, &data.h);
        let gtz = apply_gt(&data, &zh);
        let r_d: Vec<f64> = gtz.iter().zip(&data.c).map(|(g, c)| g + c * tau).collect();
        let cz: f64 = data.c.iter().zip(&z).map(|(c, z)| c * z).sum();
        let hz = data.h.dot(&zh);
        let r_g = cz + hz + kappa;
        let mu = (s.dot(&zh) + tau * kappa) / (nu + 1.0);

        if !(r_p.is_finite() && mu.is_finite() && r_g.is_finite()) {
            return Ok(SolveOutcome {
                status: SdpStatus::NumericalFailure,
                value: best_value,
                point: descale_point(&best_point),
                gap: f64::INFINITY,
                iterations: iter,
            });
        }

        // convergence of the de-embedded point; residuals are measured
        // relative to the point they certify, as usual
        let pobj = cz / tau;
        let dobj = -hz / tau;
        let pres = (r_p.norm() / tau) / (1.0 + hnorm + gz.norm() / tau);
        let dres = (r_d.iter().map(|v| v * v).sum::<f64>().sqrt() / tau)
            / (1.0 + cnorm + zh.norm() / tau);
        let gap_abs = (s.dot(&zh) / (tau * tau)).abs().max((pobj - dobj).abs());
        let total = pobj + value_offset;
        let relgap = gap_abs / (1.0 + total.abs().max((dobj + value_offset).abs()));
        if std::env::var_os("QUADTEMPL_SDP_TRACE").is_some() {
            let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            eprintln!(
                "it {iter}: pres {pres:.3e} dres {dres:.3e} relgap {relgap:.3e} tau {tau:.3e} kappa {kappa:.3e} mu {mu:.3e} pobj {pobj:.9} |z| {znorm:.2e} |s| {:.2e} |zh| {:.2e}",
                s.norm(),
                zh.norm()
            );
        }
        if pres <= opts.feas_tol && dres <= opts.feas_tol && relgap <= opts.gap_tol {
            let mut point = descale_point(&z.iter().map(|v| v / tau).collect::<Vec<_>>());
            for (p, sgn) in point.iter_mut().zip(&problem.sign_constrained) {
                if *sgn && *p < 0.0 {
                    *p = 0.0;
                }
            }
            let value = objective_of(&point);
            return Ok(SolveOutcome {
                status: SdpStatus::Optimal,
                value,
                point,
                gap: gap_abs,
                iterations: iter,
            });
        }

        // stall and breakdown bookkeeping: once the attainable floor is hit,
        // mu keeps shrinking while the Newton systems degrade, so stop at
        // the first clear divergence and fall back on the best iterate
        let merit = (pres / opts.feas_tol)
            .max(dres / opts.feas_tol)
            .max(relgap / opts.gap_tol);
        if merit < 0.9 * best_merit {
            best_merit = merit;
            stall = 0;
        } else {
            stall += 1;
        }
        if merit <= BEST_ACCEPT && merit < best_opt_merit {
            best_opt_merit = merit;
            let mut point = descale_point(&z.iter().map(|v| v / tau).collect::<Vec<_>>());
            for (p, sgn) in point.iter_mut().zip(&problem.sign_constrained) {
                if *sgn && *p < 0.0 {
                    *p = 0.0;
                }
            }
            let value = objective_of(&point);
            best_opt = Some(SolveOutcome {
                status: SdpStatus::Optimal,
                value,
                point,
                gap: gap_abs,
                iterations: iter,
            });
        }
        if pobj.is_finite() && pres <= opts.feas_tol * 100.0 && pobj < best_value {
            best_value = pobj;
            best_point = z.iter().map(|v| v / tau).collect();
        }
        // certificate check: a Farkas dual proves the LMI has no solution,
        // a feasible descent ray proves the objective is unbounded below;
        // callers treat both as a +inf bound, which is the sound direction
        // certificate quality is scale-free: the constraint residual of the
        // normalized certificate must be small relative to the strictly
        // negative objective it certifies
        let certificates = |iter: usize| -> Option<SolveOutcome> {
            let gt_abs = gtz.iter().map(|v| v * v).sum::<f64>().sqrt();
            // a certificate is only meaningful from inside the cone
            let zh_ok = sym_eigen(&zh.lmi).min_value() >= -1e-9 * (1.0 + zh.norm())
                && zh.diag.iter().all(|&v| v >= -1e-9);
            let s_ok = sym_eigen(&s.lmi).min_value() >= -1e-9 * (1.0 + s.norm())
                && s.diag.iter().all(|&v| v >= -1e-9);
            if !zh_ok || !s_ok {
                return None;
            }
            // significance first: a certificate whose objective is itself
            // at noise level certifies nothing (tau and kappa can both
            // collapse on the trivial ray)
            if hz <= -1e-8 * (1.0 + zh.norm()) && gt_abs <= 1e-6 * (-hz) {
                return Some(SolveOutcome {
                    status: SdpStatus::Infeasible,
                    value: f64::INFINITY,
                    point: vec![0.0; m],
                    gap: f64::INFINITY,
                    iterations: iter,
                });
            }
            let ray_abs = {
                let mut r = gz.clone();
                r.axpy(1.0, &s);
                r.norm()
            };
            let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if cz <= -1e-8 * (1.0 + znorm) && ray_abs <= 1e-6 * (-cz) {
                return Some(SolveOutcome {
                    status: SdpStatus::Unbounded,
                    value: f64::NEG_INFINITY,
                    point: descale_point(&z),
                    gap: f64::INFINITY,
                    iterations: iter,
                });
            }
            None
        };

        // a merit plateau only means breakdown once complementarity is
        // already small; larger problems legitimately plateau mid-path
        let stalled = stall >= 12 && mu < 1e-8;
        if stalled || mu < 1e-13 || merit > 1e4 * best_merit || tau < 1e-12 {
            if tau < 1e-4 {
                if let Some(cert) = certificates(iter) {
                    return Ok(cert);
                }
            }
            if let Some(b) = best_opt {
                return Ok(b);
            }
            return Ok(SolveOutcome {
                status: SdpStatus::NumericalFailure,
                value: best_value,
                point: descale_point(&best_point),
                gap: f64::INFINITY,
                iterations: iter,
            });
        }

        let scaling = match nt_scaling(&s, &zh) {
            Some(sc) => sc,
            None => {
                return Ok(SolveOutcome {
                    status: SdpStatus::NumericalFailure,
                    value: best_value,
                    point: descale_point(&best_point),
                    gap: f64::INFINITY,
                    iterations: iter,
                })
            }
        };

        // Schur complement pieces shared by predictor and corrector
        let winv_g: Vec<ConeVec> = data.gs.iter().map(|g| scaling.sandwich_winv(g)).collect();
        let mut mmat = Mat::zeros(m, m);
        for j in 0..m {
            for k2 in j..m {
                let v = data.gs[j].dot(&winv_g[k2]);
                mmat.set(j, k2, v);
                mmat.set(k2, j, v);
            }
        }
        let winv_h = scaling.sandwich_winv(&data.h);
        let gvec: Vec<f64> = data.gs.iter().map(|g| g.dot(&winv_h)).collect();
        let h2 = data.h.dot(&winv_h);

        let solve_direction = |sigma: f64| -> Option<(Vec<f64>, f64, ConeVec, ConeVec, f64)> {
            let one_minus = 1.0 - sigma;
            let gt = scaling.target(sigma * mu);
            let mut rr = gt.clone();
            rr.axpy(one_minus, &r_p);
            let winv_rr = scaling.sandwich_winv(&rr);
            let q1: Vec<f64> = (0..m)
                .map(|j| -one_minus * r_d[j] - data.gs[j].dot(&winv_rr))
                .collect();
            let q2 = -one_minus * r_g - data.h.dot(&winv_rr) - (sigma * mu - tau * kappa) / tau;

            // assemble bordered system
            let mut sys = Mat::zeros(m + 1, m + 1);
            for j in 0..m {
                for k2 in 0..m {
                    sys.set(j, k2, mmat.get(j, k2));
                }
                sys.set(j, m, data.c[j] - gvec[j]);
                sys.set(m, j, data.c[j] + gvec[j]);
            }
            sys.set(m, m, -(h2 + kappa / tau));
            let mut rhs = q1.clone();
            rhs.push(q2);
            let mut sol = lu_solve(&sys, &rhs).or_else(|| {
                // tiny ridge against exactly dependent blocks
                let mut sys2 = sys.clone();
                for j in 0..=m {
                    sys2.add_at(j, j, 1e-13 * (1.0 + sys.get(j, j).abs()));
                }
                lu_solve(&sys2, &rhs)
            })?;
            // iterative refinement pushes the attainable residual floor down
            // a couple of digits on ill-conditioned late iterations
            for _ in 0..2 {
                let ax = sys.matvec(&sol);
                let resid: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                if resid.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-16 {
                    break;
                }
                if let Some(corr) = lu_solve(&sys, &resid) {
                    for (s, c) in sol.iter_mut().zip(&corr) {
                        *s += c;
                    }
                } else {
                    break;
                }
            }
            let (dz_vec, dtau) = (sol[..m].to_vec(), sol[m]);

            let mut inner = apply_g(&data, &dz_vec);
            inner.axpy(-dtau, &data.h);
            inner.axpy(1.0, &rr);
            let dzh = scaling.sandwich_winv(&inner);
            let mut ds = gt.clone();
            ds.axpy(-1.0, &scaling.sandwich_w(&dzh));
            let dkappa = (sigma * mu - tau * kappa - kappa * dtau) / tau;
            if !(ds.is_finite() && dzh.is_finite() && dtau.is_finite() && dkappa.is_finite()) {
                return None;
            }
            Some((dz_vec, dtau, ds, dzh, dkappa))
        };

        let step_bound = |ds: &ConeVec, dzh: &ConeVec, dtau: f64, dkappa: f64| -> f64 {
            let mut a = scaling.max_step_s(ds, &s).min(scaling.max_step_z(dzh, &zh));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        // predictor
        let aff = solve_direction(0.0);
        let sigma = match &aff {
            Some((_, dtau, ds, dzh, dkappa)) => {
                let a = step_bound(ds, dzh, *dtau, *dkappa).min(1.0);
                let mut strial = s.clone();
                strial.axpy(a, ds);
                let mut ztrial = zh.clone();
                ztrial.axpy(a, dzh);
                let mu_aff = (strial.dot(&ztrial) + (tau + a * dtau) * (kappa + a * dkappa))
                    / (nu + 1.0);
                ((mu_aff / mu).powi(3)).clamp(0.01, 0.99)
            }
            None => 0.5,
        };

        // corrector
        let dir = solve_direction(sigma).or(aff);
        let (dz_vec, dtau, ds, dzh, dkappa) = match dir {
            Some(d) => d,
            None => {
                return Ok(SolveOutcome {
                    status: SdpStatus::NumericalFailure,
                    value: best_value,
                    point: descale_point(&best_point),
                    gap: f64::INFINITY,
                    iterations: iter,
                })
            }
        };
        // slightly conservative fraction-to-boundary keeps late iterates
        // centered enough for the residuals and the gap to converge together
        let frac = if mu < 1e-6 { 0.95 } else { 0.99 };
        let alpha = (frac * step_bound(&ds, &dzh, dtau, dkappa)).min(1.0);
        if alpha <= 1e-14 {
            return Ok(SolveOutcome {
                status: SdpStatus::NumericalFailure,
                value: best_value,
                point: descale_point(&best_point),
                gap: f64::INFINITY,
                iterations: iter,
            });
        }

        for (zj, dj) in z.iter_mut().zip(&dz_vec) {
            *zj += alpha * dj;
        }
        s.axpy(alpha, &ds);
        zh.axpy(alpha, &dzh);
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }

    Ok(SolveOutcome {
        status: SdpStatus::NumericalFailure,
        value: best_value,
        point: descale_point(&best_point),
        gap: f64::INFINITY,
        iterations: opts.max_newton_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadforms::{n_matrix, shor_matrix, QuadraticForm};

    fn opts() -> SdpOptions {
        SdpOptions::default()
    }

    #[test]
    fn corner_scalar_inequality() {
        // F0 = N(1), G_eta = N(-1): feasibility needs eta >= 1.
        let p = SdpProblem {
            f0: n_matrix(1.0, 3).into_mat(),
            blocks: vec![n_matrix(-1.0, 3).into_mat()],
            objective: vec![1.0],
            sign_constrained: vec![false],
        };
        let out = solve_sdp(&p, &opts()).unwrap();
        assert_eq!(out.status, SdpStatus::Optimal);
        assert!((out.value - 1.0).abs() < 1e-6, "value {}", out.value);
    }

    #[test]
    fn rotation_template_bound() {
        // min eta s.t. M(p1.T) + eta N(-1) + l1 (N(1) - M(p1)) + l2 (N(-1) - M(p2)) <= 0
        // where p1 = x^2 + y^2 and p2 = -p1; the rotation is orthogonal so
        // p1 . T = p1. Optimal value 1.
        let p1 = QuadraticForm::new(crate::linalg::Mat::identity(2), vec![0.0; 2], 0.0);
        let p2 = p1.neg();
        let f0 = shor_matrix(&p1).into_mat();
        let g_eta = n_matrix(-1.0, 3).into_mat();
        let g1 = n_matrix(1.0, 3).into_mat().sub(&shor_matrix(&p1).into_mat());
        let g2 = n_matrix(-1.0, 3).into_mat().sub(&shor_matrix(&p2).into_mat());
        let prob = SdpProblem {
            f0,
            blocks: vec![g_eta, g1, g2],
            objective: vec![1.0, 0.0, 0.0],
            sign_constrained: vec![false, true, true],
        };
        let out = solve_sdp(&prob, &opts()).unwrap();
        assert_eq!(out.status, SdpStatus::Optimal);
        assert!((out.value - 1.0).abs() < 1e-6, "value {}", out.value);
        assert!(out.point[1] >= 0.0 && out.point[2] >= 0.0);
    }

    #[test]
    fn detects_infeasible_block() {
        // x^2 unbounded above: no multiplier-free eta makes diag(1) <= 0.
        let obj = QuadraticForm::new(crate::linalg::Mat::identity(1), vec![0.0], 0.0);
        let prob = SdpProblem {
            f0: shor_matrix(&obj).into_mat(),
            blocks: vec![n_matrix(-1.0, 2).into_mat()],
            objective: vec![1.0],
            sign_constrained: vec![false],
        };
        let out = solve_sdp(&prob, &opts()).unwrap();
        assert_eq!(out.status, SdpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded_descent() {
        // constraint x^2 <= -1 is empty: sup over the empty set, the dual
        // decreases without bound.
        let q = QuadraticForm::new(crate::linalg::Mat::identity(1), vec![0.0], 1.0);
        // objective form: x ; constraint block N(v)-M(q) with v = -1 -> c part -1 - ... already in q
        let obj = QuadraticForm::linear(vec![1.0], 0.0);
        let g_q = shor_matrix(&q).into_mat().scale(-1.0);
        let prob = SdpProblem {
            f0: shor_matrix(&obj).into_mat(),
            blocks: vec![n_matrix(-1.0, 2).into_mat(), g_q],
            objective: vec![1.0, 0.0],
            sign_constrained: vec![false, true],
        };
        let out = solve_sdp(&prob, &opts()).unwrap();
        assert_eq!(out.status, SdpStatus::Unbounded);
    }

    #[test]
    fn feasible_point_verifies_a_posteriori() {
        let p1 = QuadraticForm::new(crate::linalg::Mat::identity(2), vec![1.0, -0.5], 0.25);
        let f0 = shor_matrix(&p1).into_mat();
        let g_eta = n_matrix(-1.0, 3).into_mat();
        let g1 = n_matrix(2.0, 3).into_mat().sub(&shor_matrix(&p1).into_mat());
        let prob = SdpProblem {
            f0,
            blocks: vec![g_eta, g1],
            objective: vec![1.0, 0.0],
            sign_constrained: vec![false, true],
        };
        let out = solve_sdp(&prob, &opts()).unwrap();
        assert_eq!(out.status, SdpStatus::Optimal);
        let lmi = prob.lmi_at(&out.point);
        let top = crate::linalg::sym_eigen(&lmi).max_value();
        assert!(top <= 1e-6, "LMI residual {top}");
    }
}
