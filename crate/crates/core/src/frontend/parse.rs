//! Lexer and recursive-descent parser for the toy language.

use super::ast::*;
use super::FrontendError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Assign, // '=' or ':='
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Le,
    Lt,
    Ge,
    Gt,
    KwWhile,
    KwIf,
    KwElse,
    KwTrue,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    loc: Loc,
}

fn lex(src: &str) -> Result<Vec<Spanned>, FrontendError> {
    let mut out = Vec::new();
    let mut line = 1u32;
    let mut col = 1u32;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let loc = Loc { line, col };
        let bump = |chars: &mut std::iter::Peekable<std::str::Chars>,
                    line: &mut u32,
                    col: &mut u32| {
            let c = chars.next().unwrap();
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            c
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump(&mut chars, &mut line, &mut col);
            }
            '#' => {
                // comment to end of line
                while let Some(&c) = chars.peek() {
                    bump(&mut chars, &mut line, &mut col);
                    if c == '\n' {
                        break;
                    }
                }
            }
            '0'..='9' | '.' => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' {
                        text.push(bump(&mut chars, &mut line, &mut col));
                    } else if (c == 'e' || c == 'E')
                        && text.chars().next().map_or(false, |f| f.is_ascii_digit())
                    {
                        text.push(bump(&mut chars, &mut line, &mut col));
                        if let Some(&s) = chars.peek() {
                            if s == '+' || s == '-' {
                                text.push(bump(&mut chars, &mut line, &mut col));
                            }
                        }
                    } else {
                        break;
                    }
                }
                let v: f64 = text
                    .parse()
                    .map_err(|_| FrontendError::syntax(loc, format!("bad number {text:?}")))?;
                out.push(Spanned { tok: Tok::Num(v), loc });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut name = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        name.push(bump(&mut chars, &mut line, &mut col));
                    } else {
                        break;
                    }
                }
                let tok = match name.as_str() {
                    "while" => Tok::KwWhile,
                    "if" => Tok::KwIf,
                    "else" => Tok::KwElse,
                    "true" => Tok::KwTrue,
                    _ => Tok::Ident(name),
                };
                out.push(Spanned { tok, loc });
            }
            _ => {
                let c = bump(&mut chars, &mut line, &mut col);
                let tok = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '=' => Tok::Assign,
                    ':' => {
                        // tolerate ': =' as an assignment spelling
                        while chars.peek() == Some(&' ') {
                            bump(&mut chars, &mut line, &mut col);
                        }
                        if chars.peek() == Some(&'=') {
                            bump(&mut chars, &mut line, &mut col);
                            Tok::Assign
                        } else {
                            return Err(FrontendError::syntax(loc, "stray ':'".into()));
                        }
                    }
                    '<' => {
                        if chars.peek() == Some(&'=') {
                            bump(&mut chars, &mut line, &mut col);
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if chars.peek() == Some(&'=') {
                            bump(&mut chars, &mut line, &mut col);
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    other => {
                        return Err(FrontendError::syntax(
                            loc,
                            format!("unexpected character {other:?}"),
                        ))
                    }
                };
                out.push(Spanned { tok, loc });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|s| &s.tok)
    }

    fn loc(&self) -> Loc {
        self.toks.get(self.pos).map(|s| s.loc).unwrap_or_default()
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), FrontendError> {
        let loc = self.loc();
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(FrontendError::syntax(loc, format!("expected {what}, found {other:?}"))),
        }
    }

    fn eat(&mut self, tok: Tok) -> bool {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// `[k]` at statement position.
    fn try_label(&mut self) -> Option<u32> {
        if self.peek() == Some(&Tok::LBracket) {
            if let (Some(Tok::Num(v)), Some(Tok::RBracket)) =
                (self.peek2(), self.toks.get(self.pos + 2).map(|s| &s.tok))
            {
                if v.fract() == 0.0 && *v >= 0.0 {
                    let k = *v as u32;
                    self.pos += 3;
                    return Some(k);
                }
            }
        }
        None
    }

    fn parse_items(&mut self, in_block: bool) -> Result<Vec<Item>, FrontendError> {
        let mut items = Vec::new();
        loop {
            while self.eat(Tok::Semi) {}
            if let Some(k) = self.try_label() {
                items.push(Item::Label(k));
                continue;
            }
            match self.peek() {
                None => break,
                Some(Tok::RBrace) if in_block => break,
                Some(Tok::KwWhile) => {
                    self.next();
                    let head_label = self.try_label();
                    self.expect(Tok::LParen, "'(' after while")?;
                    let guard = self.parse_guard()?;
                    self.expect(Tok::RParen, "')' after loop guard")?;
                    self.expect(Tok::LBrace, "'{' opening the loop body")?;
                    let body = self.parse_items(true)?;
                    self.expect(Tok::RBrace, "'}' closing the loop body")?;
                    items.push(Item::Stmt(Stmt::While { head_label, guard, body }));
                }
                Some(Tok::KwIf) => {
                    self.next();
                    self.expect(Tok::LParen, "'(' after if")?;
                    let guard = self.parse_guard()?;
                    self.expect(Tok::RParen, "')' after condition")?;
                    self.expect(Tok::LBrace, "'{' opening the then branch")?;
                    let then_body = self.parse_items(true)?;
                    self.expect(Tok::RBrace, "'}' closing the then branch")?;
                    let else_body = if self.eat(Tok::KwElse) {
                        self.expect(Tok::LBrace, "'{' opening the else branch")?;
                        let eb = self.parse_items(true)?;
                        self.expect(Tok::RBrace, "'}' closing the else branch")?;
                        Some(eb)
                    } else {
                        None
                    };
                    items.push(Item::Stmt(Stmt::If { guard, then_body, else_body }));
                }
                Some(Tok::Ident(_)) => {
                    let loc = self.loc();
                    let var = match self.next() {
                        Some(Tok::Ident(name)) => name,
                        _ => unreachable!(),
                    };
                    self.expect(Tok::Assign, "'=' in assignment")?;
                    let rhs = self.parse_expr()?;
                    // statement separators are optional before labels and
                    // closing braces, matching the loose layout of the
                    // source programs
                    self.eat(Tok::Semi);
                    items.push(Item::Stmt(Stmt::Assign(Assign { var, rhs, loc })));
                }
                Some(other) => {
                    let loc = self.loc();
                    return Err(FrontendError::syntax(
                        loc,
                        format!("unexpected token {other:?}"),
                    ));
                }
            }
        }
        Ok(items)
    }

    fn parse_guard(&mut self) -> Result<GuardExpr, FrontendError> {
        // guards may be wrapped in extra parentheses: ((v >= 1/2))
        if self.peek() == Some(&Tok::KwTrue) {
            self.next();
            return Ok(GuardExpr::True);
        }
        if self.peek() == Some(&Tok::LParen) {
            // try a parenthesized guard; fall back to expression parsing
            let save = self.pos;
            self.next();
            if let Ok(inner) = self.parse_guard() {
                if self.eat(Tok::RParen) {
                    return Ok(inner);
                }
            }
            self.pos = save;
        }
        let loc = self.loc();
        let lhs = self.parse_expr()?;
        let op = match self.next() {
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::Gt) => CmpOp::Gt,
            other => {
                return Err(FrontendError::syntax(
                    loc,
                    format!("expected comparison in guard, found {other:?}"),
                ))
            }
        };
        let rhs = self.parse_expr()?;
        Ok(GuardExpr::Cmp { lhs, op, rhs, loc })
    }

    fn parse_expr(&mut self) -> Result<Expr, FrontendError> {
        let mut acc = self.parse_term()?;
        loop {
            if self.eat(Tok::Plus) {
                let rhs = self.parse_term()?;
                acc = Expr::Bin(BinOp::Add, Box::new(acc), Box::new(rhs));
            } else if self.eat(Tok::Minus) {
                let rhs = self.parse_term()?;
                acc = Expr::Bin(BinOp::Sub, Box::new(acc), Box::new(rhs));
            } else {
                return Ok(acc);
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, FrontendError> {
        let mut acc = self.parse_factor()?;
        loop {
            if self.eat(Tok::Star) {
                let rhs = self.parse_factor()?;
                acc = Expr::Bin(BinOp::Mul, Box::new(acc), Box::new(rhs));
            } else if self.eat(Tok::Slash) {
                let rhs = self.parse_factor()?;
                acc = Expr::Bin(BinOp::Div, Box::new(acc), Box::new(rhs));
            } else {
                return Ok(acc);
            }
        }
    }

    fn parse_factor(&mut self) -> Result<Expr, FrontendError> {
        if self.eat(Tok::Minus) {
            let inner = self.parse_factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        if self.eat(Tok::Plus) {
            return self.parse_factor();
        }
        let mut base = self.parse_primary()?;
        while self.eat(Tok::Caret) {
            let loc = self.loc();
            match self.next() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 0.0 && v <= 64.0 => {
                    base = Expr::Pow(Box::new(base), v as u32);
                }
                other => {
                    return Err(FrontendError::syntax(
                        loc,
                        format!("exponent must be a small nonnegative integer, found {other:?}"),
                    ))
                }
            }
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Expr, FrontendError> {
        let loc = self.loc();
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Ident(name)) => Ok(Expr::Var(name, loc)),
            Some(Tok::LParen) => {
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::LBracket) => {
                let lo = self.parse_signed_number()?;
                self.expect(Tok::Comma, "',' in interval")?;
                let hi = self.parse_signed_number()?;
                self.expect(Tok::RBracket, "']' closing interval")?;
                Ok(Expr::Interval(lo, hi))
            }
            other => Err(FrontendError::syntax(loc, format!("unexpected {other:?} in expression"))),
        }
    }

    fn parse_signed_number(&mut self) -> Result<f64, FrontendError> {
        let neg = self.eat(Tok::Minus);
        let loc = self.loc();
        match self.next() {
            Some(Tok::Num(v)) => Ok(if neg { -v } else { v }),
            other => Err(FrontendError::syntax(loc, format!("expected number, found {other:?}"))),
        }
    }
}

/// Parse a source text into the surface AST.
pub fn parse(src: &str) -> Result<Program, FrontendError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let items = p.parse_items(false)?;
    Ok(Program { items })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OSCILLATOR: &str = "\
x = [0,1];
v := [0,1]; [1]
h = 0.01;
while (true) { [2]
  u = v;
  v = v*(1-h)-h*x;
  x = x+h*u; [3] }
";

    #[test]
    fn oscillator_listing_parses() {
        let ast = parse(OSCILLATOR).unwrap();
        // two interval declarations, one constant, a while-true loop
        let assigns: Vec<&Assign> = ast
            .items
            .iter()
            .filter_map(|i| match i {
                Item::Stmt(Stmt::Assign(a)) => Some(a),
                _ => None,
            })
            .collect();
        assert_eq!(assigns.len(), 3);
        assert!(matches!(assigns[0].rhs, Expr::Interval(0.0, 1.0)));
        assert!(matches!(assigns[1].rhs, Expr::Interval(0.0, 1.0)));
        assert!(matches!(assigns[2].rhs, Expr::Num(v) if v == 0.01));
        let (guard, body) = ast
            .items
            .iter()
            .find_map(|i| match i {
                Item::Stmt(Stmt::While { guard, body, .. }) => Some((guard, body)),
                _ => None,
            })
            .expect("loop");
        assert_eq!(guard, &GuardExpr::True);
        let body_assigns = body
            .iter()
            .filter(|i| matches!(i, Item::Stmt(Stmt::Assign(_))))
            .count();
        assert_eq!(body_assigns, 3);
        // three labels in total
        let labels: Vec<u32> = ast
            .items
            .iter()
            .chain(body.iter())
            .filter_map(|i| match i {
                Item::Label(k) => Some(*k),
                _ => None,
            })
            .collect();
        assert_eq!(labels, vec![1, 2, 3]);
    }

    #[test]
    fn empty_program_parses_to_empty_ast() {
        assert_eq!(parse("").unwrap(), Program::default());
        assert_eq!(parse("  \n# comment only\n").unwrap(), Program::default());
    }

    #[test]
    fn print_parse_round_trip() {
        let ast = parse(OSCILLATOR).unwrap();
        let printed = format!("{ast}");
        let reparsed = parse(&printed).unwrap();
        assert_eq!(ast, reparsed);
    }

    #[test]
    fn doubled_guard_parentheses() {
        let src = "x = [0,1];\nwhile [2] ((x>=1/2)) { x = x*0.5; [3] }";
        let ast = parse(src).unwrap();
        let printed = format!("{ast}");
        assert_eq!(parse(&printed).unwrap(), ast);
    }
}
