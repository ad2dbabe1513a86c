//! Quadratic functions `x -> x^T A x + b^T x + c`, their compositions with
//! affine and quadratic maps, and the matrix kernels built on them: the
//! (d+1)-sized symmetric matrices of the relaxation, the Loewner-order test,
//! the Moore-Penrose pseudoinverse, and the closed-form value of a fixed
//! Lagrange-multiplier choice.

use crate::domain::ExtReal;
use crate::linalg::{sym_eigen, Mat};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadFormError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("composition with a quadratic map requires a linear form")]
    NonlinearComposition,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// `x -> x^T A x + b^T x + c` with `A` stored exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    a: Mat,
    b: Vec<f64>,
    c: f64,
}

impl QuadraticForm {
    /// Symmetrizes `a` on construction; parsers and compositions may hand in
    /// asymmetric raw matrices.
    pub fn new(a: Mat, b: Vec<f64>, c: f64) -> Self {
        assert_eq!(a.rows(), a.cols(), "quadratic part must be square");
        assert_eq!(a.rows(), b.len(), "quadratic and linear part disagree");
        QuadraticForm { a: a.symmetrized(), b, c }
    }

    pub fn linear(b: Vec<f64>, c: f64) -> Self {
        let d = b.len();
        QuadraticForm { a: Mat::zeros(d, d), b, c }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        QuadraticForm { a: Mat::zeros(dim, dim), b: vec![0.0; dim], c }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim());
        self.a.quad_form(x) + self.b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>() + self.c
    }

    pub fn is_linear(&self) -> bool {
        self.a.data().iter().all(|&v| v == 0.0)
    }

    pub fn neg(&self) -> Self {
        QuadraticForm {
            a: self.a.scale(-1.0),
            b: self.b.iter().map(|v| -v).collect(),
            c: -self.c,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        QuadraticForm {
            a: self.a.scale(s),
            b: self.b.iter().map(|v| v * s).collect(),
            c: self.c * s,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        QuadraticForm {
            a: self.a.add(&other.a),
            b: self.b.iter().zip(&other.b).map(|(x, y)| x + y).collect(),
            c: self.c + other.c,
        }
    }

    /// Shift the constant term: `g - t`.
    pub fn minus_const(&self, t: f64) -> Self {
        let mut g = self.clone();
        g.c -= t;
        g
    }
}

/// `x -> M x + k`, the parallel affine assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    m: Mat,
    k: Vec<f64>,
}

impl AffineMap {
    pub fn new(m: Mat, k: Vec<f64>) -> Self {
        assert_eq!(m.rows(), k.len(), "matrix rows and offset disagree");
        AffineMap { m, k }
    }

    pub fn identity(dim: usize) -> Self {
        AffineMap { m: Mat::identity(dim), k: vec![0.0; dim] }
    }

    pub fn in_dim(&self) -> usize {
        self.m.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn offset(&self) -> &[f64] {
        &self.k
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.m.matvec(x);
        for (yi, ki) in y.iter_mut().zip(&self.k) {
            *yi += ki;
        }
        y
    }
}

/// One quadratic form per output component; arises from polynomial
/// assignments of degree two.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticMap {
    rows: Vec<QuadraticForm>,
}

impl QuadraticMap {
    pub fn new(rows: Vec<QuadraticForm>) -> Self {
        assert!(!rows.is_empty(), "quadratic map needs at least one row");
        let d = rows[0].dim();
        assert!(rows.iter().all(|r| r.dim() == d), "rows of mixed dimension");
        QuadraticMap { rows }
    }

    pub fn in_dim(&self) -> usize {
        self.rows[0].dim()
    }

    pub fn out_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[QuadraticForm] {
        &self.rows
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.evaluate(x)).collect()
    }
}

/// Either kind of transfer map attached to an assignment or test edge.
#[derive(Clone, Debug, PartialEq)]
pub enum TransferMap {
    Affine(AffineMap),
    Quadratic(QuadraticMap),
}

impl TransferMap {
    pub fn in_dim(&self) -> usize {
        match self {
            TransferMap::Affine(t) => t.in_dim(),
            TransferMap::Quadratic(t) => t.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            TransferMap::Affine(t) => t.out_dim(),
            TransferMap::Quadratic(t) => t.out_dim(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TransferMap::Affine(t) => t.apply(x),
            TransferMap::Quadratic(t) => t.apply(x),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, TransferMap::Affine(_))
    }

    /// `p . T` as a quadratic form; the quadratic-map case requires `p`
    /// linear so the composition stays within degree two.
    pub fn compose(&self, p: &QuadraticForm) -> Result<QuadraticForm, QuadFormError> {
        match self {
            TransferMap::Affine(t) => compose_affine(p, t),
            TransferMap::Quadratic(t) => compose_quadratic(p, t),
        }
    }
}

/// `p . T` for affine `T = Mx + k`:
/// `A' = M^T A M`, `b' = M^T (2 A k + b)`, `c' = k^T A k + b^T k + c`.
pub fn compose_affine(p: &QuadraticForm, t: &AffineMap) -> Result<QuadraticForm, QuadFormError> {
    if p.dim() != t.out_dim() {
        return Err(QuadFormError::Dimension(format!(
            "form of dim {} composed with map producing dim {}",
            p.dim(),
            t.out_dim()
        )));
    }
    let m = t.matrix();
    let k = t.offset();
    let mt = m.transpose();
    let a_new = mt.matmul(&p.a.matmul(m));
    let mut inner = p.a.matvec(k);
    for (v, b) in inner.iter_mut().zip(&p.b) {
        *v = 2.0 * *v + b;
    }
    let b_new = mt.matvec(&inner);
    let c_new = p.a.quad_form(k) + p.b.iter().zip(k).map(|(b, k)| b * k).sum::<f64>() + p.c;
    Ok(QuadraticForm::new(a_new, b_new, c_new))
}

/// `p . T` for quadratic `T`; only linear `p` keeps the result quadratic.
pub fn compose_quadratic(
    p: &QuadraticForm,
    t: &QuadraticMap,
) -> Result<QuadraticForm, QuadFormError> {
    if !p.is_linear() {
        return Err(QuadFormError::NonlinearComposition);
    }
    if p.dim() != t.out_dim() {
        return Err(QuadFormError::Dimension(format!(
            "form of dim {} composed with map producing dim {}",
            p.dim(),
            t.out_dim()
        )));
    }
    let mut acc = QuadraticForm::constant(t.in_dim(), p.c);
    for (coef, row) in p.b.iter().zip(t.rows()) {
        if *coef != 0.0 {
            acc = acc.add(&row.scale(*coef));
        }
    }
    Ok(acc)
}

/// Symmetric `(d+1) x (d+1)` matrix with the constant term in the corner,
/// half the linear part on the border and the quadratic block inside.
#[derive(Clone, Debug, PartialEq)]
pub struct ShorMatrix {
    mat: Mat,
}

impl ShorMatrix {
    pub fn size(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    /// `(1, x)^T M (1, x)` equals the quadratic form the matrix encodes.
    pub fn evaluate_lifted(&self, x: &[f64]) -> f64 {
        let mut lifted = Vec::with_capacity(x.len() + 1);
        lifted.push(1.0);
        lifted.extend_from_slice(x);
        self.mat.quad_form(&lifted)
    }
}

pub fn shor_matrix(g: &QuadraticForm) -> ShorMatrix {
    let d = g.dim();
    let mut m = Mat::zeros(d + 1, d + 1);
    m.set(0, 0, g.c());
    for i in 0..d {
        m.set(0, i + 1, 0.5 * g.b()[i]);
        m.set(i + 1, 0, 0.5 * g.b()[i]);
        for j in 0..d {
            m.set(i + 1, j + 1, g.a().get(i, j));
        }
    }
    ShorMatrix { mat: m }
}

/// Matrix with `y` in the corner and zeros elsewhere.
pub fn n_matrix(y: f64, size: usize) -> ShorMatrix {
    let mut m = Mat::zeros(size, size);
    m.set(0, 0, y);
    ShorMatrix { mat: m }
}

/// Default tolerance for semidefiniteness checks, scaled by the matrix norm:
/// SDP duals arrive with roughly 1e-8 noise.
pub fn default_psd_tol(s: &Mat) -> f64 {
    1e-8 * (1.0 + s.frobenius_norm())
}

/// True iff the largest eigenvalue is at most `tol`.
pub fn is_negative_semidefinite(s: &Mat, tol: f64) -> Result<bool, QuadFormError> {
    if s.data().iter().any(|v| !v.is_finite()) {
        return Err(QuadFormError::Numerical("non-finite entry in matrix".into()));
    }
    if s.rows() == 0 {
        return Ok(true);
    }
    Ok(sym_eigen(s).max_value() <= tol)
}

/// Moore-Penrose pseudoinverse of a symmetric matrix via eigenvalue
/// truncation: eigenvalues with `|l| <= rank_tol * max|l|` are treated as
/// zero. The zero matrix maps to the zero matrix.
pub fn pseudoinverse(s: &Mat, rank_tol: f64) -> Mat {
    assert_eq!(s.rows(), s.cols());
    if s.rows() == 0 {
        return Mat::zeros(0, 0);
    }
    let e = sym_eigen(s);
    let max_abs = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return Mat::zeros(s.rows(), s.cols());
    }
    let cut = rank_tol * max_abs;
    e.assemble(|l| if l.abs() > cut { 1.0 / l } else { 0.0 })
}

/// Numerical knobs for [`policy_value`].
#[derive(Clone, Debug)]
pub struct ValueTols {
    /// Scale factor for the negative-semidefiniteness test.
    pub psd_scale: f64,
    /// Relative residual allowed by the image-membership test.
    pub image_residual: f64,
    /// Rank cutoff for the pseudoinverse.
    pub rank_tol: f64,
}

impl Default for ValueTols {
    fn default() -> Self {
        ValueTols { psd_scale: 1e-8, image_residual: 1e-7, rank_tol: 1e-10 }
    }
}

impl ValueTols {
    pub fn psd_tol(&self, s: &Mat) -> f64 {
        self.psd_scale * (1.0 + s.frobenius_norm())
    }
}

/// Value of the unconstrained maximization `sup_x objective(x) - sum_k
/// mult_k * g_k(x)` for fixed nonnegative multipliers.
///
/// Writing `A = A_obj - sum mult A_g` (and `B`, `C` alike), the supremum is
/// finite iff `A` is negative semidefinite and `B` lies in its image, in
/// which case it equals `-B^T A^+ B / 4 + C`. Unboundedness is the `+inf`
/// return, not an error.
pub fn policy_value(
    objective: &QuadraticForm,
    constraints: &[(&QuadraticForm, f64)],
    tols: &ValueTols,
) -> ExtReal {
    let d = objective.dim();
    let mut a = objective.a().clone();
    let mut b = objective.b().to_vec();
    let mut c = objective.c();
    // gross scale of the accumulation: cancellation noise in the residual
    // matrix lives at this scale times machine epsilon, and eigenvalues
    // below it must be treated as zero or the pseudoinverse inverts noise
    let mut gross = 1.0 + objective.a().frobenius_norm();
    for (g, mult) in constraints {
        debug_assert!(*mult >= 0.0, "multipliers must be nonnegative");
        debug_assert_eq!(g.dim(), d);
        if *mult == 0.0 {
            continue;
        }
        gross += mult * g.a().frobenius_norm();
        a.axpy(-mult, g.a());
        for (bi, gi) in b.iter_mut().zip(g.b()) {
            *bi -= mult * gi;
        }
        c -= mult * g.c();
    }

    // the semidefiniteness tolerance scales with the gross constituents:
    // the residual matrix is a difference of large terms, and its own norm
    // says nothing about the cancellation noise it carries
    match is_negative_semidefinite(&a, tols.psd_scale * gross) {
        Ok(true) => {}
        _ => return ExtReal::PosInf,
    }
    let floor = 1e-12 * gross / a.frobenius_norm().max(f64::MIN_POSITIVE);
    let pinv = pseudoinverse(&a, tols.rank_tol.max(floor.min(1.0)));
    // image membership: || A A^+ B - B || <= tol (1 + ||B||)
    let proj = a.matvec(&pinv.matvec(&b));
    let resid: f64 = proj
        .iter()
        .zip(&b)
        .map(|(p, b)| (p - b) * (p - b))
        .sum::<f64>()
        .sqrt();
    let bnorm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if resid > tols.image_residual * (1.0 + bnorm) {
        return ExtReal::PosInf;
    }
    let pb = pinv.matvec(&b);
    let quad: f64 = b.iter().zip(&pb).map(|(x, y)| x * y).sum();
    ExtReal::Finite(-0.25 * quad + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_with_identity_is_identity() {
        let p = QuadraticForm::new(Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]), vec![0.0; 2], 0.0);
        let t = AffineMap::identity(2);
        let q = compose_affine(&p, &t).unwrap();
        assert_eq!(q, p);
    }

    #[test]
    fn oscillator_composition_quadratic_block() {
        // x^2 composed with x' = x + h v, v' = -h x + (1-h) v: the result is
        // (x + h v)^2, i.e. quadratic block [[1, h], [h, h^2]].
        let h = 0.01;
        let p = QuadraticForm::new(Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]), vec![0.0; 2], 0.0);
        let t = AffineMap::new(Mat::from_rows(&[vec![1.0, h], vec![-h, 1.0 - h]]), vec![0.0; 2]);
        let q = compose_affine(&p, &t).unwrap();
        assert!((q.a().get(0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(q.a().get(0, 1), q.a().get(1, 0));
        assert!((q.a().get(0, 1) - h).abs() < 1e-15);
        assert!((q.a().get(1, 1) - h * h).abs() < 1e-15);
        // pointwise agreement with p(T(x)) pins the convention
        for (x, v) in [(1.0, 2.0), (-0.5, 0.25), (3.0, -1.0)] {
            let lhs = q.evaluate(&[x, v]);
            let rhs = p.evaluate(&t.apply(&[x, v]));
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert!(q.b().iter().all(|&v| v == 0.0));
        assert_eq!(q.c(), 0.0);
    }

    #[test]
    fn linear_through_quadratic_map() {
        // (x + y) composed with (-3x^2 - y^2, -y^2 + x^2) is -2x^2 - 2y^2
        let p = QuadraticForm::linear(vec![1.0, 1.0], 0.0);
        let t = QuadraticMap::new(vec![
            QuadraticForm::new(Mat::from_rows(&[vec![-3.0, 0.0], vec![0.0, -1.0]]), vec![0.0; 2], 0.0),
            QuadraticForm::new(Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]), vec![0.0; 2], 0.0),
        ]);
        let q = compose_quadratic(&p, &t).unwrap();
        assert_eq!(q.a().get(0, 0), -2.0);
        assert_eq!(q.a().get(1, 1), -2.0);
        assert_eq!(q.a().get(0, 1), 0.0);
        assert!(q.b().iter().all(|&v| v == 0.0));
        assert_eq!(q.c(), 0.0);
    }

    #[test]
    fn quadratic_composition_rejects_nonlinear_template() {
        let p = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        let t = QuadraticMap::new(vec![QuadraticForm::zero(2), QuadraticForm::zero(2)]);
        assert_eq!(compose_quadratic(&p, &t), Err(QuadFormError::NonlinearComposition));
    }

    #[test]
    fn zero_linear_form_through_quadratic_map_is_zero() {
        let t = QuadraticMap::new(vec![QuadraticForm::new(Mat::identity(2), vec![1.0, 0.0], 3.0); 2]);
        let q = compose_quadratic(&QuadraticForm::linear(vec![0.0, 0.0], 0.0), &t).unwrap();
        assert_eq!(q, QuadraticForm::zero(2));
    }

    #[test]
    fn shor_matrix_layouts() {
        // g(x, y) = x + y
        let g = QuadraticForm::linear(vec![1.0, 1.0], 0.0);
        let m = shor_matrix(&g);
        let expect = Mat::from_rows(&[
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.0],
            vec![0.5, 0.0, 0.0],
        ]);
        assert_eq!(m.mat(), &expect);

        // r(x, y) = y^2 + x^2 - 2
        let r = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], -2.0);
        let mr = shor_matrix(&r);
        let expect_r = Mat::from_rows(&[
            vec![-2.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        assert_eq!(mr.mat(), &expect_r);

        assert_eq!(shor_matrix(&QuadraticForm::zero(2)).mat(), &Mat::zeros(3, 3));

        let n = n_matrix(-1.0, 3);
        assert_eq!(n.mat().get(0, 0), -1.0);
        assert_eq!(n.mat().frobenius_norm(), 1.0);
    }

    #[test]
    fn negative_semidefinite_checks() {
        assert!(is_negative_semidefinite(&Mat::identity(3).scale(-1.0), 0.0).unwrap());
        assert!(!is_negative_semidefinite(&Mat::diag(&[1.0, -1.0]), 1e-9).unwrap());

        // T^T L T - L for the oscillator step matrix and its Lyapunov matrix
        let h = 0.01;
        let t = Mat::from_rows(&[vec![1.0, h], vec![-h, 1.0 - h]]);
        let l = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let s = t.transpose().matmul(&l.matmul(&t)).sub(&l);
        assert!(is_negative_semidefinite(&s, default_psd_tol(&s)).unwrap());
    }

    #[test]
    fn pseudoinverse_of_diagonal() {
        assert_eq!(pseudoinverse(&Mat::identity(4), 1e-10), Mat::identity(4));
        let p = pseudoinverse(&Mat::diag(&[2.0, 0.0]), 1e-10);
        assert!((p.get(0, 0) - 0.5).abs() < 1e-14);
        assert_eq!(p.get(1, 1), 0.0);
        assert_eq!(pseudoinverse(&Mat::zeros(3, 3), 1e-10), Mat::zeros(3, 3));
    }

    #[test]
    fn policy_value_oscillator_initial_policy() {
        // objective x^2 . T under one unit multiplier on the Lyapunov template
        let h = 0.01;
        let t = AffineMap::new(Mat::from_rows(&[vec![1.0, h], vec![-h, 1.0 - h]]), vec![0.0; 2]);
        let p = QuadraticForm::new(Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]), vec![0.0; 2], 0.0);
        let lyap = QuadraticForm::new(Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]), vec![0.0; 2], 0.0);
        let obj = compose_affine(&p, &t).unwrap();
        let v = policy_value(&obj, &[(&lyap, 1.0)], &ValueTols::default());
        assert_eq!(v, ExtReal::Finite(0.0));
    }

    #[test]
    fn policy_value_unconstrained_concave_peak() {
        let obj = QuadraticForm::new(Mat::identity(2).scale(-1.0), vec![0.0; 2], 0.0);
        assert_eq!(policy_value(&obj, &[], &ValueTols::default()), ExtReal::Finite(0.0));
    }

    #[test]
    fn policy_value_detects_unbounded() {
        let obj = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        assert_eq!(policy_value(&obj, &[], &ValueTols::default()), ExtReal::PosInf);
        // linear growth along the kernel
        let obj2 = QuadraticForm::new(Mat::diag(&[-1.0, 0.0]), vec![0.0, 1.0], 0.0);
        assert_eq!(policy_value(&obj2, &[], &ValueTols::default()), ExtReal::PosInf);
    }
}
