//! Program intermediate representation: the fixpoint equation `v = F(v)` as
//! typed coordinates, one per control point.
//!
//! Coordinate kinds mirror what the transfer function does there: constants
//! at entries, assignments, guarded assignments (tests), and joins at loop
//! heads. The dependency graph may only close cycles through joins.

use crate::domain::{ExtReal, Row};
use crate::quadforms::{QuadraticForm, TransferMap};
use crate::shor::relax_bound_strict;
use crate::solvers::{SdpOptions, SolverError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuardSense {
    Then,
    Else,
}

#[derive(Clone, Debug)]
pub enum CoordinateKind {
    /// Fixed bounds, typically the abstraction of the initial box.
    Const(Row),
    Assign {
        prev: usize,
        map: TransferMap,
    },
    /// Guarded transfer; `guard` is stored in the `<= 0` normal form, and an
    /// else-branch stores the negated condition.
    Test {
        prev: usize,
        map: TransferMap,
        guard: QuadraticForm,
        sense: GuardSense,
    },
    Join {
        left: usize,
        right: usize,
    },
}

impl CoordinateKind {
    pub fn dependencies(&self) -> Vec<usize> {
        match self {
            CoordinateKind::Const(_) => vec![],
            CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } => vec![*prev],
            CoordinateKind::Join { left, right } => vec![*left, *right],
        }
    }

    pub fn is_transfer(&self) -> bool {
        matches!(self, CoordinateKind::Assign { .. } | CoordinateKind::Test { .. })
    }
}

/// The equation system `v = F(v)` over `n` control points and a finite
/// template basis.
#[derive(Clone, Debug)]
pub struct EquationSystem {
    dim: usize,
    templates: Vec<QuadraticForm>,
    template_names: Vec<String>,
    coords: Vec<CoordinateKind>,
    var_names: Vec<String>,
    init_box: Option<Vec<(f64, f64)>>,
}

impl EquationSystem {
    pub fn new(
        dim: usize,
        templates: Vec<QuadraticForm>,
        template_names: Vec<String>,
        coords: Vec<CoordinateKind>,
        var_names: Vec<String>,
    ) -> Self {
        assert_eq!(templates.len(), template_names.len());
        EquationSystem { dim, templates, template_names, coords, var_names, init_box: None }
    }

    pub fn with_init_box(mut self, init_box: Vec<(f64, f64)>) -> Self {
        self.init_box = Some(init_box);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn template_count(&self) -> usize {
        self.templates.len()
    }

    pub fn templates(&self) -> &[QuadraticForm] {
        &self.templates
    }

    pub fn template_names(&self) -> &[String] {
        &self.template_names
    }

    pub fn coord(&self, i: usize) -> &CoordinateKind {
        &self.coords[i]
    }

    pub fn coords(&self) -> &[CoordinateKind] {
        &self.coords
    }

    pub fn coord_mut(&mut self, i: usize) -> &mut CoordinateKind {
        &mut self.coords[i]
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn init_box(&self) -> Option<&[(f64, f64)]> {
        self.init_box.as_deref()
    }

    /// Replace the bounds of a `Const` coordinate (bounds files win over
    /// derived values).
    pub fn override_const(&mut self, coord: usize, row: Row) -> Result<(), String> {
        match &mut self.coords[coord] {
            CoordinateKind::Const(r) => {
                if row.width() != self.templates.len() {
                    return Err(format!(
                        "bounds row has {} entries for {} templates",
                        row.width(),
                        self.templates.len()
                    ));
                }
                *r = row;
                Ok(())
            }
            _ => Err(format!("coordinate {} is not a constant", coord + 1)),
        }
    }
}

/// A named well-formedness violation; `coord` is 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub coord: usize,
    pub message: String,
}

/// Total and side-effect-free check of the type invariants. Empty result
/// means well-formed.
pub fn validate(sys: &EquationSystem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = sys.len();
    let d = sys.dim();

    if sys.templates().is_empty() {
        out.push(Diagnostic { coord: 0, message: "template basis is empty".into() });
    }
    for (k, t) in sys.templates().iter().enumerate() {
        if t.dim() != d {
            out.push(Diagnostic {
                coord: 0,
                message: format!("template {k} has dimension {} instead of {d}", t.dim()),
            });
        }
    }
    let all_linear = sys.templates().iter().all(|t| t.is_linear());

    for (i, c) in sys.coords().iter().enumerate() {
        for dep in c.dependencies() {
            if dep >= n {
                out.push(Diagnostic {
                    coord: i,
                    message: format!("dependency {} out of range (n = {n})", dep + 1),
                });
            }
        }
        match c {
            CoordinateKind::Const(row) => {
                if row.width() != sys.template_count() {
                    out.push(Diagnostic {
                        coord: i,
                        message: "constant row width differs from basis size".into(),
                    });
                }
            }
            CoordinateKind::Assign { map, .. } | CoordinateKind::Test { map, .. } => {
                if map.in_dim() != d || map.out_dim() != d {
                    out.push(Diagnostic {
                        coord: i,
                        message: format!(
                            "transfer map is {}->{}, program dimension is {d}",
                            map.in_dim(),
                            map.out_dim()
                        ),
                    });
                }
                if !map.is_affine() && !all_linear {
                    out.push(Diagnostic {
                        coord: i,
                        message: "quadratic transfer map requires an all-linear template basis"
                            .into(),
                    });
                }
                if let CoordinateKind::Test { guard, .. } = c {
                    if guard.dim() != d {
                        out.push(Diagnostic {
                            coord: i,
                            message: "guard dimension differs from program dimension".into(),
                        });
                    }
                }
            }
            CoordinateKind::Join { .. } => {}
        }
    }

    // cycles are only allowed through joins: the assign/test edge relation
    // must be acyclic
    let mut mark = vec![0u8; n]; // 0 unvisited, 1 on stack, 2 done
    fn dfs(
        i: usize,
        sys: &EquationSystem,
        mark: &mut [u8],
        out: &mut Vec<Diagnostic>,
    ) {
        if mark[i] != 0 {
            return;
        }
        mark[i] = 1;
        if let CoordinateKind::Assign { prev, .. } | CoordinateKind::Test { prev, .. } =
            sys.coord(i)
        {
            let p = *prev;
            if p < sys.len() && !matches!(sys.coord(p), CoordinateKind::Join { .. }) {
                if mark[p] == 1 {
                    out.push(Diagnostic {
                        coord: i,
                        message: "cycle not broken by a join coordinate".into(),
                    });
                } else {
                    dfs(p, sys, mark, out);
                }
            }
        }
        mark[i] = 2;
    }
    for i in 0..n {
        dfs(i, sys, &mut mark, &mut out);
    }

    out
}

/// Sound per-template upper bounds over a finite box, by Shor relaxation.
///
/// Each variable contributes its two facet constraints together with the
/// interval product `(x_i - lo)(x_i - hi) <= 0`; the product carries the
/// curvature that bounds quadratic templates over the box (the facets alone
/// only cap linear ones).
pub fn init_from_box(
    box_bounds: &[(f64, f64)],
    templates: &[QuadraticForm],
    opts: &SdpOptions,
) -> Result<Row, SolverError> {
    let d = box_bounds.len();
    for &(lo, hi) in box_bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SolverError::BadProblem(format!("bad interval [{lo}, {hi}]")));
        }
    }
    let mut constraints = Vec::with_capacity(2 * d);
    for (i, &(lo, hi)) in box_bounds.iter().enumerate() {
        if hi - lo > 1e-9 * (1.0 + lo.abs() + hi.abs()) {
            // proper interval: the product constraint alone carries the
            // curvature and has a unique dual, facets would only introduce
            // a degenerate multiplier face
            let mut a = crate::linalg::Mat::zeros(d, d);
            a.set(i, i, 1.0);
            let mut b = vec![0.0; d];
            b[i] = -(lo + hi);
            constraints.push(QuadraticForm::new(a, b, lo * hi)); // (x_i-lo)(x_i-hi) <= 0
        } else {
            // point interval: facet pair; the squared version has no Slater
            // point and sends the multipliers to infinity
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            constraints.push(QuadraticForm::linear(e.clone(), -hi)); // x_i - hi <= 0
            let mut ne = vec![0.0; d];
            ne[i] = -1.0;
            constraints.push(QuadraticForm::linear(ne, lo)); // lo - x_i <= 0
        }
    }
    let refs: Vec<&QuadraticForm> = constraints.iter().collect();

    let mut row = Row::bottom(templates.len());
    for (k, p) in templates.iter().enumerate() {
        let out = relax_bound_strict(p, &refs, opts)?;
        let bound = match out.status {
            crate::shor::ShorStatus::Bounded => ExtReal::Finite(out.bound),
            _ => ExtReal::PosInf,
        };
        row.set(k, bound);
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::quadforms::AffineMap;

    fn oscillator_system() -> EquationSystem {
        let h = 0.01;
        let x2 = QuadraticForm::new(Mat::diag(&[1.0, 0.0]), vec![0.0; 2], 0.0);
        let v2 = QuadraticForm::new(Mat::diag(&[0.0, 1.0]), vec![0.0; 2], 0.0);
        let lyap =
            QuadraticForm::new(Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]), vec![0.0; 2], 0.0);
        let t = AffineMap::new(Mat::from_rows(&[vec![1.0, h], vec![-h, 1.0 - h]]), vec![0.0; 2]);
        EquationSystem::new(
            2,
            vec![x2, v2, lyap],
            vec!["x2".into(), "v2".into(), "L".into()],
            vec![
                CoordinateKind::Const(Row::from_finite(&[1.0, 1.0, 7.0])),
                CoordinateKind::Join { left: 0, right: 2 },
                CoordinateKind::Assign { prev: 1, map: TransferMap::Affine(t) },
            ],
            vec!["x".into(), "v".into()],
        )
    }

    #[test]
    fn oscillator_system_is_well_formed() {
        assert!(validate(&oscillator_system()).is_empty());
    }

    #[test]
    fn out_of_range_dependency_is_reported() {
        let mut sys = oscillator_system();
        *sys.coord_mut(2) = CoordinateKind::Assign {
            prev: 7,
            map: TransferMap::Affine(AffineMap::identity(2)),
        };
        let diags = validate(&sys);
        assert!(diags.iter().any(|d| d.coord == 2 && d.message.contains("out of range")));
    }

    #[test]
    fn quadratic_map_with_quadratic_template_is_reported() {
        use crate::quadforms::QuadraticMap;
        let mut sys = oscillator_system();
        let qrow = QuadraticForm::new(Mat::identity(2), vec![0.0; 2], 0.0);
        *sys.coord_mut(2) = CoordinateKind::Assign {
            prev: 1,
            map: TransferMap::Quadratic(QuadraticMap::new(vec![qrow.clone(), qrow])),
        };
        let diags = validate(&sys);
        assert!(diags.iter().any(|d| d.message.contains("all-linear")));
    }

    #[test]
    fn box_abstraction_of_the_lyapunov_template() {
        let lyap =
            QuadraticForm::new(Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]), vec![0.0; 2], 0.0);
        let row = init_from_box(&[(0.0, 1.0), (0.0, 1.0)], &[lyap], &SdpOptions::default())
            .unwrap();
        let b = row.get(0).finite().unwrap();
        assert!((b - 7.0).abs() < 1e-6, "bound {b}");
    }

    #[test]
    fn box_abstraction_of_linear_template() {
        let x = QuadraticForm::linear(vec![1.0], 0.0);
        let row = init_from_box(&[(0.0, 10.0)], &[x], &SdpOptions::default()).unwrap();
        let b = row.get(0).finite().unwrap();
        assert!((b - 10.0).abs() < 1e-6, "bound {b}");
    }

    #[test]
    fn box_abstraction_dominates_vertex_enumeration() {
        // template x^2 over [0,1]: vertex maximum is 1; the relaxation is an
        // upper bound and here exact
        let x2 = QuadraticForm::new(Mat::identity(1), vec![0.0], 0.0);
        let row = init_from_box(&[(0.0, 1.0)], &[x2], &SdpOptions::default()).unwrap();
        let b = row.get(0).finite().unwrap();
        let vertex_max = 1.0;
        assert!(b >= vertex_max - 1e-8);
        assert!((b - 1.0).abs() < 1e-6, "bound {b}");
    }
}
