//! Lowering: surface AST to the equation system.
//!
//! The declaration prefix becomes one constant coordinate whose bounds are
//! the box abstraction of the initializers. Straight-line blocks fold into
//! a single parallel map by polynomial substitution (degree two enforced),
//! loop heads become joins, and guarded edges become test coordinates with
//! the guard in `<= 0` normal form; strict guards are weakened to non-strict
//! with a note.

use super::ast::*;
use super::formats::TemplateSet;
use super::FrontendError;
use crate::domain::Row;
use crate::ir::{CoordinateKind, EquationSystem, GuardSense};
use crate::linalg::Mat;
use crate::quadforms::{AffineMap, QuadraticForm, QuadraticMap, TransferMap};
use crate::solvers::SdpOptions;
use std::collections::HashMap;

/// Polynomial of degree at most two over the program variables.
#[derive(Clone, Debug, PartialEq)]
struct Poly {
    c: f64,
    lin: Vec<f64>,
    quad: Option<Mat>,
}

impl Poly {
    fn constant(d: usize, c: f64) -> Self {
        Poly { c, lin: vec![0.0; d], quad: None }
    }

    fn var(d: usize, i: usize) -> Self {
        let mut lin = vec![0.0; d];
        lin[i] = 1.0;
        Poly { c: 0.0, lin, quad: None }
    }

    fn dim(&self) -> usize {
        self.lin.len()
    }

    fn as_const(&self) -> Option<f64> {
        if self.lin.iter().all(|&v| v == 0.0) && self.quad.is_none() {
            Some(self.c)
        } else {
            None
        }
    }

    fn is_affine(&self) -> bool {
        self.quad.as_ref().map_or(true, |q| q.data().iter().all(|&v| v == 0.0))
    }

    fn add(&self, other: &Poly) -> Poly {
        let quad = match (&self.quad, &other.quad) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (Some(a), Some(b)) => Some(a.add(b)),
        };
        Poly {
            c: self.c + other.c,
            lin: self.lin.iter().zip(&other.lin).map(|(a, b)| a + b).collect(),
            quad,
        }
    }

    fn scale(&self, s: f64) -> Poly {
        Poly {
            c: self.c * s,
            lin: self.lin.iter().map(|v| v * s).collect(),
            quad: self.quad.as_ref().map(|q| q.scale(s)),
        }
    }

    fn neg(&self) -> Poly {
        self.scale(-1.0)
    }

    fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    fn mul(&self, other: &Poly, loc: Loc) -> Result<Poly, FrontendError> {
        let d = self.dim();
        let deg = |p: &Poly| -> u32 {
            if p.quad.as_ref().map_or(false, |q| q.data().iter().any(|&v| v != 0.0)) {
                2
            } else if p.lin.iter().any(|&v| v != 0.0) {
                1
            } else {
                0
            }
        };
        if deg(self) + deg(other) > 2 {
            return Err(FrontendError::Degree { loc });
        }
        // constant * anything
        if let Some(c) = self.as_const() {
            return Ok(other.scale(c));
        }
        if let Some(c) = other.as_const() {
            return Ok(self.scale(c));
        }
        // linear * linear
        let mut quad = Mat::zeros(d, d);
        for i in 0..d {
            if self.lin[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                quad.add_at(i, j, self.lin[i] * other.lin[j]);
            }
        }
        let mut out = Poly { c: self.c * other.c, lin: vec![0.0; d], quad: Some(quad) };
        for i in 0..d {
            out.lin[i] = self.c * other.lin[i] + other.c * self.lin[i];
        }
        Ok(out)
    }

    fn pow(&self, k: u32, loc: Loc) -> Result<Poly, FrontendError> {
        let mut acc = Poly::constant(self.dim(), 1.0);
        for _ in 0..k {
            acc = acc.mul(self, loc)?;
        }
        Ok(acc)
    }

    fn into_form(self) -> QuadraticForm {
        let d = self.dim();
        QuadraticForm::new(self.quad.unwrap_or_else(|| Mat::zeros(d, d)), self.lin, self.c)
    }
}

/// What a pending guard will become once the next coordinate materializes.
#[derive(Clone, Debug)]
struct PendingGuard {
    form: QuadraticForm,
    sense: GuardSense,
}

pub struct LowerOutput {
    pub system: EquationSystem,
    /// 1-based source labels per coordinate where present.
    pub labels: Vec<Option<u32>>,
    /// Human-readable lowering notes (weakened guards, dropped dead
    /// initializers).
    pub notes: Vec<String>,
}

struct Lowerer<'a> {
    set: &'a TemplateSet,
    var_index: HashMap<String, usize>,
    consts: HashMap<String, f64>,
    coords: Vec<CoordinateKind>,
    labels: Vec<Option<u32>>,
    notes: Vec<String>,
    current: usize,
    pending: Vec<Assign>,
    pending_guard: Option<PendingGuard>,
    /// A loop was just closed; its exit test materializes lazily if more
    /// code follows.
    loop_exit: Option<(usize, Option<QuadraticForm>)>,
}

impl<'a> Lowerer<'a> {
    fn d(&self) -> usize {
        self.set.dim
    }

    fn push_coord(&mut self, kind: CoordinateKind) -> usize {
        self.coords.push(kind);
        self.labels.push(None);
        self.coords.len() - 1
    }

    fn eval(
        &self,
        expr: &Expr,
        env: &HashMap<String, Poly>,
    ) -> Result<Poly, FrontendError> {
        let d = self.d();
        match expr {
            Expr::Num(v) => Ok(Poly::constant(d, *v)),
            Expr::Interval(..) => Err(FrontendError::Lower {
                message: "interval literals are only allowed in declarations".into(),
            }),
            Expr::Var(name, loc) => {
                if let Some(p) = env.get(name) {
                    return Ok(p.clone());
                }
                if let Some(c) = self.consts.get(name) {
                    return Ok(Poly::constant(d, *c));
                }
                Err(FrontendError::UndefinedVariable { name: name.clone(), loc: *loc })
            }
            Expr::Neg(inner) => Ok(self.eval(inner, env)?.neg()),
            Expr::Bin(op, a, b) => {
                let pa = self.eval(a, env)?;
                let pb = self.eval(b, env)?;
                match op {
                    BinOp::Add => Ok(pa.add(&pb)),
                    BinOp::Sub => Ok(pa.sub(&pb)),
                    BinOp::Mul => pa.mul(&pb, expr_loc(a)),
                    BinOp::Div => match pb.as_const() {
                        Some(c) if c != 0.0 => Ok(pa.scale(1.0 / c)),
                        Some(_) => Err(FrontendError::Lower {
                            message: "division by zero".into(),
                        }),
                        None => Err(FrontendError::Lower {
                            message: "division by a non-constant expression".into(),
                        }),
                    },
                }
            }
            Expr::Pow(base, k) => {
                let pb = self.eval(base, env)?;
                pb.pow(*k, expr_loc(base))
            }
        }
    }

    /// Fold the pending block (and consume the pending guard) into one
    /// coordinate. `force` materializes an identity coordinate even when
    /// nothing is pending.
    fn flush(&mut self, force: bool) -> Result<(), FrontendError> {
        self.materialize_loop_exit()?;
        if self.pending.is_empty() && self.pending_guard.is_none() && !force {
            return Ok(());
        }
        let d = self.d();
        let mut env: HashMap<String, Poly> = HashMap::new();
        for (name, &i) in &self.var_index {
            env.insert(name.clone(), Poly::var(d, i));
        }
        let block = std::mem::take(&mut self.pending);
        let mut touched_temp: Vec<String> = Vec::new();
        for a in &block {
            let rhs = self.eval(&a.rhs, &env)?;
            if !self.var_index.contains_key(&a.var) && self.consts.contains_key(&a.var) {
                return Err(FrontendError::Lower {
                    message: format!("assignment to constant {:?}", a.var),
                });
            }
            if !self.var_index.contains_key(&a.var) && !env.contains_key(&a.var) {
                touched_temp.push(a.var.clone());
            }
            env.insert(a.var.clone(), rhs);
        }
        let rows: Vec<Poly> = self
            .set
            .vars
            .iter()
            .map(|name| env.get(name).cloned().expect("template variable in scope"))
            .collect();
        let map = if rows.iter().all(|p| p.is_affine()) {
            let mut m = Mat::zeros(d, d);
            let mut k = vec![0.0; d];
            for (r, p) in rows.iter().enumerate() {
                for (cidx, &v) in p.lin.iter().enumerate() {
                    m.set(r, cidx, v);
                }
                k[r] = p.c;
            }
            TransferMap::Affine(AffineMap::new(m, k))
        } else {
            if !self.set.forms.iter().all(|t| t.is_linear()) {
                return Err(FrontendError::Lower {
                    message: "polynomial assignment requires an all-linear template basis"
                        .into(),
                });
            }
            TransferMap::Quadratic(QuadraticMap::new(
                rows.into_iter().map(Poly::into_form).collect(),
            ))
        };
        let prev = self.current;
        let kind = match self.pending_guard.take() {
            Some(g) => CoordinateKind::Test { prev, map, guard: g.form, sense: g.sense },
            None => CoordinateKind::Assign { prev, map },
        };
        self.current = self.push_coord(kind);
        Ok(())
    }

    fn materialize_loop_exit(&mut self) -> Result<(), FrontendError> {
        if let Some((head, guard)) = self.loop_exit.take() {
            match guard {
                Some(r) => {
                    let exit = self.push_coord(CoordinateKind::Test {
                        prev: head,
                        map: TransferMap::Affine(AffineMap::identity(self.d())),
                        guard: r.neg(),
                        sense: GuardSense::Else,
                    });
                    self.notes.push(format!(
                        "loop exit at coordinate {} keeps the negated guard non-strictly",
                        exit + 1
                    ));
                    self.current = exit;
                }
                None => {
                    return Err(FrontendError::Lower {
                        message: "code after a while(true) loop is unreachable".into(),
                    })
                }
            }
        }
        Ok(())
    }

    /// Guard to `r <= 0` normal form; strict comparisons weaken.
    fn normalize_guard(
        &self,
        guard: &GuardExpr,
    ) -> Result<Option<QuadraticForm>, FrontendError> {
        let env: HashMap<String, Poly> = self
            .var_index
            .iter()
            .map(|(name, &i)| (name.clone(), Poly::var(self.d(), i)))
            .collect();
        match guard {
            GuardExpr::True => Ok(None),
            GuardExpr::Cmp { lhs, op, rhs, loc } => {
                let pl = self.eval(lhs, &env)?;
                let pr = self.eval(rhs, &env)?;
                let _ = loc;
                let r = match op {
                    CmpOp::Le | CmpOp::Lt => pl.sub(&pr),
                    CmpOp::Ge | CmpOp::Gt => pr.sub(&pl),
                };
                Ok(Some(r.into_form()))
            }
        }
    }

    fn lower_items(&mut self, items: &[Item]) -> Result<(), FrontendError> {
        for (pos, item) in items.iter().enumerate() {
            match item {
                Item::Label(k) => {
                    self.flush(false)?;
                    if self.labels[self.current].is_some() {
                        return Err(FrontendError::Lower {
                            message: format!("coordinate already labeled, extra label [{k}]"),
                        });
                    }
                    self.labels[self.current] = Some(*k);
                }
                Item::Stmt(Stmt::Assign(a)) => {
                    self.materialize_loop_exit()?;
                    self.pending.push(a.clone());
                }
                Item::Stmt(Stmt::While { head_label, guard, body }) => {
                    self.flush(false)?;
                    let entry = self.current;
                    let head =
                        self.push_coord(CoordinateKind::Join { left: entry, right: usize::MAX });
                    if let Some(k) = head_label {
                        self.labels[head] = Some(*k);
                    }
                    self.current = head;
                    let r = self.normalize_guard(guard)?;
                    if matches!(guard, GuardExpr::Cmp { op: CmpOp::Lt | CmpOp::Gt, .. }) {
                        self.notes.push("weakened strict loop guard to non-strict".into());
                    }
                    self.pending_guard = r
                        .clone()
                        .map(|form| PendingGuard { form, sense: GuardSense::Then });
                    self.lower_items(body)?;
                    // close the block and the back edge
                    if self.pending_guard.is_some() || !self.pending.is_empty() {
                        self.flush(false)?;
                    }
                    let back = self.current;
                    if let CoordinateKind::Join { right, .. } = &mut self.coords[head] {
                        *right = if back == head { head } else { back };
                    }
                    self.current = head;
                    self.loop_exit = Some((head, r));
                    // a label straight after the loop names its exit point
                    if pos + 1 == items.len() {
                        self.loop_exit = None; // program ends at the loop head
                    }
                }
                Item::Stmt(Stmt::If { guard, then_body, else_body }) => {
                    self.flush(false)?;
                    let entry = self.current;
                    let r = self.normalize_guard(guard)?;
                    if matches!(guard, GuardExpr::Cmp { op: CmpOp::Lt | CmpOp::Gt, .. }) {
                        self.notes.push("weakened strict branch guard to non-strict".into());
                    }

                    self.pending_guard = r
                        .clone()
                        .map(|form| PendingGuard { form, sense: GuardSense::Then });
                    self.current = entry;
                    self.lower_items(then_body)?;
                    self.flush(self.current == entry)?;
                    let then_exit = self.current;

                    let else_exit = match else_body {
                        Some(eb) => {
                            self.pending_guard = r
                                .clone()
                                .map(|form| PendingGuard {
                                    form: form.neg(),
                                    sense: GuardSense::Else,
                                });
                            if r.is_some() {
                                self.notes.push(
                                    "else branch keeps the negated guard non-strictly".into(),
                                );
                            }
                            self.current = entry;
                            self.lower_items(eb)?;
                            self.flush(self.current == entry)?;
                            Some(self.current)
                        }
                        None => None,
                    };

                    // a join materializes only if code follows the branches
                    let more = items[pos + 1..]
                        .iter()
                        .any(|i| matches!(i, Item::Stmt(_)));
                    if more {
                        let skip = match else_exit {
                            Some(e) => e,
                            None => {
                                self.pending_guard = r.clone().map(|form| PendingGuard {
                                    form: form.neg(),
                                    sense: GuardSense::Else,
                                });
                                self.current = entry;
                                self.flush(true)?;
                                self.current
                            }
                        };
                        self.current =
                            self.push_coord(CoordinateKind::Join { left: then_exit, right: skip });
                    } else {
                        self.current = then_exit;
                    }
                }
            }
        }
        Ok(())
    }
}

fn expr_loc(e: &Expr) -> Loc {
    match e {
        Expr::Var(_, loc) => *loc,
        Expr::Neg(inner) | Expr::Pow(inner, _) => expr_loc(inner),
        Expr::Bin(_, a, _) => expr_loc(a),
        _ => Loc::default(),
    }
}

/// Count assignments per variable across the whole program.
fn assignment_counts(items: &[Item], counts: &mut HashMap<String, usize>) {
    for item in items {
        match item {
            Item::Stmt(Stmt::Assign(a)) => *counts.entry(a.var.clone()).or_insert(0) += 1,
            Item::Stmt(Stmt::While { body, .. }) => assignment_counts(body, counts),
            Item::Stmt(Stmt::If { then_body, else_body, .. }) => {
                assignment_counts(then_body, counts);
                if let Some(eb) = else_body {
                    assignment_counts(eb, counts);
                }
            }
            Item::Label(_) => {}
        }
    }
}

/// Lower a parsed program against a template basis.
pub fn lower(
    ast: &Program,
    set: &TemplateSet,
    opts: &SdpOptions,
) -> Result<LowerOutput, FrontendError> {
    let d = set.dim;
    let var_index: HashMap<String, usize> =
        set.vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();

    let mut counts = HashMap::new();
    assignment_counts(&ast.items, &mut counts);

    // declaration prefix: interval and constant initializers
    let mut box_bounds: Vec<Option<(f64, f64)>> = vec![None; d];
    let mut consts: HashMap<String, f64> = HashMap::new();
    let mut notes = Vec::new();
    let mut entry_label: Option<u32> = None;
    let mut rest_start = ast.items.len();
    for (pos, item) in ast.items.iter().enumerate() {
        match item {
            Item::Label(k) => {
                if entry_label.is_some() {
                    rest_start = pos;
                    break;
                }
                entry_label = Some(*k);
            }
            Item::Stmt(Stmt::Assign(a)) => {
                // a declaration initializes a variable to an interval or a
                // constant-foldable scalar
                let const_eval = |e: &Expr| -> Option<f64> {
                    fn go(e: &Expr, consts: &HashMap<String, f64>) -> Option<f64> {
                        match e {
                            Expr::Num(v) => Some(*v),
                            Expr::Var(name, _) => consts.get(name).copied(),
                            Expr::Neg(i) => go(i, consts).map(|v| -v),
                            Expr::Pow(b, k) => go(b, consts).map(|v| v.powi(*k as i32)),
                            Expr::Bin(op, x, y) => {
                                let (a, b) = (go(x, consts)?, go(y, consts)?);
                                Some(match op {
                                    BinOp::Add => a + b,
                                    BinOp::Sub => a - b,
                                    BinOp::Mul => a * b,
                                    BinOp::Div => a / b,
                                })
                            }
                            Expr::Interval(..) => None,
                        }
                    }
                    go(e, &consts)
                };
                let decl = match &a.rhs {
                    Expr::Interval(lo, hi) => Some((*lo, *hi)),
                    other => const_eval(other).map(|v| (v, v)),
                };
                let Some((lo, hi)) = decl else {
                    rest_start = pos;
                    break;
                };
                match var_index.get(&a.var) {
                    Some(&i) => {
                        if box_bounds[i].is_some() {
                            rest_start = pos;
                            break; // a re-assignment is program code
                        }
                        box_bounds[i] = Some((lo, hi));
                    }
                    None => {
                        if lo != hi {
                            return Err(FrontendError::Lower {
                                message: format!(
                                    "interval initializer for {:?}, which no template covers",
                                    a.var
                                ),
                            });
                        }
                        if counts.get(&a.var).copied().unwrap_or(0) > 1 {
                            notes.push(format!(
                                "initializer of {:?} is dead (reassigned before any use)",
                                a.var
                            ));
                        } else {
                            consts.insert(a.var.clone(), lo);
                        }
                    }
                }
            }
            _ => {
                rest_start = pos;
                break;
            }
        }
    }

    let the_box: Result<Vec<(f64, f64)>, FrontendError> = box_bounds
        .iter()
        .enumerate()
        .map(|(i, b)| {
            b.ok_or_else(|| FrontendError::Lower {
                message: format!("variable {:?} has no initializer", set.vars[i]),
            })
        })
        .collect();
    let the_box = the_box?;

    let entry_row = if ast.items.is_empty() {
        Row::bottom(set.forms.len())
    } else {
        crate::ir::init_from_box(&the_box, &set.forms, opts)
            .map_err(|e| FrontendError::Lower { message: format!("box abstraction: {e}") })?
    };

    let mut lowerer = Lowerer {
        set,
        var_index,
        consts,
        coords: Vec::new(),
        labels: Vec::new(),
        notes,
        current: 0,
        pending: Vec::new(),
        pending_guard: None,
        loop_exit: None,
    };

    if ast.items.is_empty() {
        let system = EquationSystem::new(
            d,
            set.forms.clone(),
            set.names.clone(),
            vec![],
            set.vars.clone(),
        );
        return Ok(LowerOutput { system, labels: vec![], notes: lowerer.notes });
    }

    let entry = lowerer.push_coord(CoordinateKind::Const(entry_row));
    lowerer.labels[entry] = entry_label;
    lowerer.current = entry;
    lowerer.lower_items(&ast.items[rest_start..])?;
    lowerer.flush(false)?;

    // labels, when present, must agree with the coordinate numbering
    for (i, l) in lowerer.labels.iter().enumerate() {
        if let Some(k) = l {
            if *k as usize != i + 1 {
                return Err(FrontendError::Lower {
                    message: format!(
                        "label [{k}] names coordinate {}, labels must be dense in order",
                        i + 1
                    ),
                });
            }
        }
    }

    let system = EquationSystem::new(
        d,
        set.forms.clone(),
        set.names.clone(),
        lowerer.coords,
        set.vars.clone(),
    )
    .with_init_box(the_box);
    Ok(LowerOutput { system, labels: lowerer.labels, notes: lowerer.notes })
}
