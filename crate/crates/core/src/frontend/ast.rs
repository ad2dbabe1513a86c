//! Surface syntax of the toy imperative language.
//!
//! Programs are a declaration prefix (interval or constant initializers)
//! followed by straight-line assignments, `if`/`else`, and `while` loops
//! with polynomial guards. Bracketed integers are control-point labels and
//! may sit between statements or after the `while` keyword.

use std::fmt;

/// Source position for diagnostics. Deliberately equal to everything:
/// structural AST comparison ignores where the nodes came from.
#[derive(Clone, Copy, Debug, Default)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Loc {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for Loc {}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String, Loc),
    Interval(f64, f64),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Integer power, parsed from `^`.
    Pow(Box<Expr>, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GuardExpr {
    True,
    Cmp { lhs: Expr, op: CmpOp, rhs: Expr, loc: Loc },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assign {
    pub var: String,
    pub rhs: Expr,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Assign(Assign),
    While { head_label: Option<u32>, guard: GuardExpr, body: Vec<Item> },
    If { guard: GuardExpr, then_body: Vec<Item>, else_body: Option<Vec<Item>> },
}

/// One element of a statement stream: a statement or a control-point label.
#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Stmt(Stmt),
    Label(u32),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Program {
    pub items: Vec<Item>,
}

// canonical printer; `parse(print(ast)) == ast`

fn fmt_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Num(v) => write!(f, "{v}"),
        Expr::Var(name, _) => write!(f, "{name}"),
        Expr::Interval(lo, hi) => write!(f, "[{lo}, {hi}]"),
        Expr::Neg(inner) => {
            write!(f, "(-")?;
            fmt_expr(inner, f)?;
            write!(f, ")")
        }
        Expr::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            };
            write!(f, "(")?;
            fmt_expr(a, f)?;
            write!(f, " {sym} ")?;
            fmt_expr(b, f)?;
            write!(f, ")")
        }
        Expr::Pow(base, k) => {
            write!(f, "(")?;
            fmt_expr(base, f)?;
            write!(f, " ^ {k})")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, f)
    }
}

impl fmt::Display for GuardExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuardExpr::True => write!(f, "true"),
            GuardExpr::Cmp { lhs, op, rhs, .. } => {
                let sym = match op {
                    CmpOp::Le => "<=",
                    CmpOp::Lt => "<",
                    CmpOp::Ge => ">=",
                    CmpOp::Gt => ">",
                };
                write!(f, "{lhs} {sym} {rhs}")
            }
        }
    }
}

fn fmt_items(items: &[Item], indent: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let pad = "  ".repeat(indent);
    for item in items {
        match item {
            Item::Label(k) => writeln!(f, "{pad}[{k}]")?,
            Item::Stmt(Stmt::Assign(a)) => writeln!(f, "{pad}{} = {};", a.var, a.rhs)?,
            Item::Stmt(Stmt::While { head_label, guard, body }) => {
                match head_label {
                    Some(k) => writeln!(f, "{pad}while [{k}] ({guard}) {{")?,
                    None => writeln!(f, "{pad}while ({guard}) {{")?,
                }
                fmt_items(body, indent + 1, f)?;
                writeln!(f, "{pad}}}")?;
            }
            Item::Stmt(Stmt::If { guard, then_body, else_body }) => {
                writeln!(f, "{pad}if ({guard}) {{")?;
                fmt_items(then_body, indent + 1, f)?;
                match else_body {
                    Some(eb) => {
                        writeln!(f, "{pad}}} else {{")?;
                        fmt_items(eb, indent + 1, f)?;
                        writeln!(f, "{pad}}}")?;
                    }
                    None => writeln!(f, "{pad}}}")?,
                }
            }
        }
    }
    Ok(())
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_items(&self.items, 0, f)
    }
}
