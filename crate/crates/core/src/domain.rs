//! The lattice of per-template bound vectors and its Galois connection with
//! state sets.
//!
//! An abstract value assigns every template `p` an upper bound in the
//! extended reals; its concretization is the sub-level set
//! `{x | p(x) <= v(p) for all p}`. Abstraction of a state set is the
//! per-template supremum. Join is pointwise max. The closure (abstract
//! convex hull) cannot be computed exactly for quadratic templates, so it is
//! over-approximated by one Shor relaxation per template, which never
//! increases any bound.

use crate::quadforms::QuadraticForm;
use crate::shor::{relax_bound, ShorStatus};
use crate::solvers::SdpOptions;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// Extended real: the bound lattice for a single template.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            panic!("NaN bound");
        } else if v == f64::INFINITY {
            ExtReal::PosInf
        } else if v == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(v)
        }
    }

    fn rank(self) -> i8 {
        match self {
            ExtReal::NegInf => -1,
            ExtReal::Finite(_) => 0,
            ExtReal::PosInf => 1,
        }
    }

    pub fn total_cmp(self, other: Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(&b).expect("NaN bound"),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    pub fn le(self, other: Self) -> bool {
        self.total_cmp(other) != Ordering::Greater
    }

    pub fn max(self, other: Self) -> Self {
        if self.le(other) {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.le(other) {
            self
        } else {
            other
        }
    }

    /// Addition; the ill-defined mix of opposite infinities resolves to
    /// `+inf`, the sound direction for upper bounds.
    pub fn add(self, other: Self) -> Self {
        match (self, other) {
            (ExtReal::PosInf, _) | (_, ExtReal::PosInf) => ExtReal::PosInf,
            (ExtReal::NegInf, _) | (_, ExtReal::NegInf) => ExtReal::NegInf,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
        }
    }

    /// Multiply by a nonnegative weight with the convention `0 * (+-inf) = 0`.
    pub fn mul_weight(self, w: f64) -> Self {
        debug_assert!(w >= 0.0);
        if w == 0.0 {
            return ExtReal::Finite(0.0);
        }
        match self {
            ExtReal::NegInf => ExtReal::NegInf,
            ExtReal::PosInf => ExtReal::PosInf,
            ExtReal::Finite(v) => ExtReal::Finite(v * w),
        }
    }

    /// Equality under the fixpoint tolerance: finite entries compare with
    /// absolute plus relative slack, infinities compare exactly.
    pub fn approx_eq(self, other: Self, atol: f64, rtol: f64) -> bool {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                (a - b).abs() <= atol + rtol * a.abs().max(b.abs())
            }
            _ => self == other,
        }
    }

    /// `self <= other + slack` on finite entries; infinities by rank.
    pub fn le_within(self, other: Self, slack: f64) -> bool {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a <= b + slack,
            _ => self.le(other),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::PosInf => write!(f, "+inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("inf"),
            ExtReal::NegInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtReal::from_f64(v)),
            Raw::Str(s) => match s.trim() {
                "inf" | "+inf" => Ok(ExtReal::PosInf),
                "-inf" => Ok(ExtReal::NegInf),
                other => Err(de::Error::custom(format!("bad extended real: {other:?}"))),
            },
        }
    }
}

/// Per-template bounds at one control point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row(pub Vec<ExtReal>);

impl Row {
    pub fn bottom(width: usize) -> Self {
        Row(vec![ExtReal::NegInf; width])
    }

    pub fn top(width: usize) -> Self {
        Row(vec![ExtReal::PosInf; width])
    }

    pub fn from_finite(values: &[f64]) -> Self {
        Row(values.iter().copied().map(ExtReal::from_f64).collect())
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, p: usize) -> ExtReal {
        self.0[p]
    }

    pub fn set(&mut self, p: usize, v: ExtReal) {
        self.0[p] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = ExtReal> + '_ {
        self.0.iter().copied()
    }

    pub fn has_neg_inf(&self) -> bool {
        self.0.iter().any(|b| matches!(b, ExtReal::NegInf))
    }

    pub fn le(&self, other: &Row) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a.le(*b))
    }

    pub fn le_within(&self, other: &Row, slack: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a.le_within(*b, slack))
    }

    pub fn approx_eq(&self, other: &Row, atol: f64, rtol: f64) -> bool {
        self.width() == other.width()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.approx_eq(*b, atol, rtol))
    }

    /// Pointwise supremum; bottom is neutral and all-top absorbing.
    pub fn join(&self, other: &Row) -> Row {
        assert_eq!(self.width(), other.width(), "joining rows over different bases");
        Row(self.0.iter().zip(&other.0).map(|(a, b)| a.max(*b)).collect())
    }

    pub fn inf(&self, other: &Row) -> Row {
        assert_eq!(self.width(), other.width());
        Row(self.0.iter().zip(&other.0).map(|(a, b)| a.min(*b)).collect())
    }
}

/// True iff `p(x) <= row(p)` for every template: membership of `x` in the
/// concretization of the row.
pub fn concretize_membership(row: &Row, templates: &[QuadraticForm], x: &[f64]) -> bool {
    debug_assert_eq!(row.width(), templates.len());
    templates.iter().zip(row.iter()).all(|(p, bound)| match bound {
        ExtReal::PosInf => true,
        ExtReal::NegInf => false,
        ExtReal::Finite(b) => p.evaluate(x) <= b,
    })
}

/// Per-template supremum over a finite point set; the empty set abstracts to
/// the bottom row.
pub fn support_of_sample(points: &[Vec<f64>], templates: &[QuadraticForm]) -> Row {
    let mut row = Row::bottom(templates.len());
    for x in points {
        for (k, p) in templates.iter().enumerate() {
            row.set(k, row.get(k).max(ExtReal::Finite(p.evaluate(x))));
        }
    }
    row
}

/// Shor over-approximation of the abstract convex hull of one row.
///
/// Each template bound is recomputed as the relaxed supremum of that
/// template over the row's own sub-level set. Failures of the solver on one
/// template keep the incoming bound, and the result is clamped to never
/// exceed the input. Rows containing `-inf` pass through unchanged.
pub fn closure(row: &Row, templates: &[QuadraticForm], opts: &SdpOptions) -> Row {
    if row.has_neg_inf() {
        return row.clone();
    }
    let solve_one = |k: usize| -> ExtReal {
        let p = &templates[k];
        let mut constraints: Vec<QuadraticForm> = Vec::new();
        for (q, bound) in templates.iter().zip(row.iter()) {
            if let ExtReal::Finite(b) = bound {
                constraints.push(q.minus_const(b));
            }
        }
        let refs: Vec<&QuadraticForm> = constraints.iter().collect();
        let out = relax_bound(p, &refs, opts);
        match out.status {
            ShorStatus::Bounded => ExtReal::Finite(out.bound).min(row.get(k)),
            _ => row.get(k),
        }
    };
    let bounds = crate::par::map_indices(templates.len(), solve_one);
    Row(bounds)
}

/// Pointwise infimum followed by closure. The fixpoint engines never need
/// it; it exists for completeness and tests.
pub fn meet(v: &Row, w: &Row, templates: &[QuadraticForm], opts: &SdpOptions) -> Row {
    closure(&v.inf(w), templates, opts)
}

/// Bounds for all control points: entry `i` is the row at coordinate `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractValue(pub Vec<Row>);

impl AbstractValue {
    pub fn bottom(coords: usize, width: usize) -> Self {
        AbstractValue(vec![Row::bottom(width); coords])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn row(&self, i: usize) -> &Row {
        &self.0[i]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut Row {
        &mut self.0[i]
    }

    pub fn le(&self, other: &AbstractValue) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a.le(b))
    }

    pub fn le_within(&self, other: &AbstractValue, slack: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a.le_within(b, slack))
    }

    pub fn approx_eq(&self, other: &AbstractValue, atol: f64, rtol: f64) -> bool {
        self.len() == other.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.approx_eq(b, atol, rtol))
    }
}

/// `+-x_i` for every variable: the interval constraint basis.
pub fn interval_basis(dim: usize) -> Vec<(String, QuadraticForm)> {
    let mut out = Vec::new();
    for i in 0..dim {
        let mut b = vec![0.0; dim];
        b[i] = 1.0;
        out.push((format!("x{}", i + 1), QuadraticForm::linear(b.clone(), 0.0)));
        b[i] = -1.0;
        out.push((format!("-x{}", i + 1), QuadraticForm::linear(b, 0.0)));
    }
    out
}

/// `x_i - x_j` differences plus the interval forms (the dummy-zero variable
/// of zone encodings folds into plain intervals here).
pub fn zone_basis(dim: usize) -> Vec<(String, QuadraticForm)> {
    let mut out = interval_basis(dim);
    for i in 0..dim {
        for j in 0..dim {
            if i == j {
                continue;
            }
            let mut b = vec![0.0; dim];
            b[i] = 1.0;
            b[j] = -1.0;
            out.push((format!("x{}-x{}", i + 1, j + 1), QuadraticForm::linear(b, 0.0)));
        }
    }
    out
}

/// `+-x_i` and `+-x_i +- x_j`: the octagon constraint basis.
pub fn octagon_basis(dim: usize) -> Vec<(String, QuadraticForm)> {
    let mut out = interval_basis(dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            for (si, sj, tag) in [
                (1.0, 1.0, "+"),
                (1.0, -1.0, "-"),
                (-1.0, 1.0, "-+"),
                (-1.0, -1.0, "--"),
            ] {
                let mut b = vec![0.0; dim];
                b[i] = si;
                b[j] = sj;
                let name = match tag {
                    "+" => format!("x{}+x{}", i + 1, j + 1),
                    "-" => format!("x{}-x{}", i + 1, j + 1),
                    "-+" => format!("-x{}+x{}", i + 1, j + 1),
                    _ => format!("-x{}-x{}", i + 1, j + 1),
                };
                out.push((name, QuadraticForm::linear(b, 0.0)));
            }
        }
    }
    out
}

/// `p_name(x) <= bound` lines for reports.
pub fn format_row(row: &Row, names: &[String]) -> String {
    let mut s = String::new();
    for (name, bound) in names.iter().zip(row.iter()) {
        s.push_str(&format!("{name}(x) <= {bound}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    #[test]
    fn ext_real_order_and_convention() {
        assert!(ExtReal::NegInf.le(ExtReal::Finite(-1e300)));
        assert!(ExtReal::Finite(1e300).le(ExtReal::PosInf));
        assert_eq!(ExtReal::PosInf.mul_weight(0.0), ExtReal::Finite(0.0));
        assert_eq!(ExtReal::NegInf.mul_weight(0.0), ExtReal::Finite(0.0));
        assert_eq!(ExtReal::PosInf.mul_weight(2.0), ExtReal::PosInf);
        assert_eq!(ExtReal::Finite(3.0).mul_weight(2.0), ExtReal::Finite(6.0));
    }

    #[test]
    fn join_examples() {
        let bottom = Row::bottom(2);
        let w = Row::from_finite(&[1.0, 7.0]);
        assert_eq!(bottom.join(&w), w);
        let a = Row::from_finite(&[1.0, 7.0]);
        let b = Row::from_finite(&[4.2, 7.0]);
        assert_eq!(a.join(&b), Row::from_finite(&[4.2, 7.0]));
    }

    #[test]
    fn membership_on_rotation_row() {
        // p1 = x^2 + y^2 bounded by 1, p2 = -(x^2 + y^2) bounded by -1: the
        // unit circle.
        let p1 = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        let p2 = p1.neg();
        let row = Row::from_finite(&[1.0, -1.0]);
        let ts = vec![p1, p2];
        assert!(concretize_membership(&row, &ts, &[1.0, 0.0]));
        assert!(!concretize_membership(&row, &ts, &[0.5, 0.0]));
        assert!(concretize_membership(&Row::top(2), &ts, &[123.0, -4.0]));
    }

    #[test]
    fn membership_on_final_oscillator_row() {
        let x2 = QuadraticForm::new(Mat::diag(&[1.0, 0.0]), vec![0.0; 2], 0.0);
        let v2 = QuadraticForm::new(Mat::diag(&[0.0, 1.0]), vec![0.0; 2], 0.0);
        let lyap = QuadraticForm::new(Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]), vec![0.0; 2], 0.0);
        let row = Row::from_finite(&[3.5, 2.3333, 7.0]);
        assert!(concretize_membership(&row, &[x2, v2, lyap], &[1.87, 0.0]));
    }

    #[test]
    fn support_of_samples() {
        let p = QuadraticForm::linear(vec![1.0, 1.0], 0.0);
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        let row = support_of_sample(&pts, &[p.clone()]);
        assert_eq!(row.get(0), ExtReal::Finite(2.0));
        assert_eq!(support_of_sample(&[], &[p]), Row::bottom(1));
        let one = support_of_sample(&[vec![0.25, -0.5]], &[QuadraticForm::linear(vec![2.0, 0.0], 1.0)]);
        assert_eq!(one.get(0), ExtReal::Finite(1.5));
    }
}
