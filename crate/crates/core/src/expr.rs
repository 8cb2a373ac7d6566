//! Coefficient expressions read from scenario files.
//!
//! Grammar (whitespace-insensitive, ASCII only):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;                 (* right-associative *)
//! primary = number | ident | "pi"
//!         | func "(" expr [ "," expr ] ")"
//!         | "(" expr ")" ;
//! func    = "exp" | "sin" | "cos" | "tanh" | "abs" | "min" | "max" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!         | "." digits [ exponent ] ;
//! ```
//!
//! Each expression is parsed for a [`SlotKind`] that fixes which of the
//! variables `t, x, y, u, w` it may reference.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ExprError;
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    T,
    X,
    Y,
    U,
    W,
}

impl Var {
    pub const ALL: [Var; 5] = [Var::T, Var::X, Var::Y, Var::U, Var::W];

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
            Var::U => "u",
            Var::W => "w",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Tanh,
    Abs,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Exp,
        Func::Sin,
        Func::Cos,
        Func::Tanh,
        Func::Abs,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Self {
        Expr::Neg(Box::new(a))
    }

    /// Whether `v` occurs anywhere in the tree.
    pub fn references(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(x) => *x == v,
            Expr::Neg(a) => a.references(v),
            Expr::Bin(_, a, b) => a.references(v) || b.references(v),
            Expr::Call(_, args) => args.iter().any(|a| a.references(v)),
        }
    }

    fn eval_raw(&self, env: &Env) -> Result<f64, ExprError> {
        let out = match self {
            Expr::Num(c) => *c,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(v) => env
                .get(*v)
                .ok_or_else(|| ExprError::MissingVariable(v.name().to_string()))?,
            Expr::Neg(a) => -a.eval_raw(env)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_raw(env)?, b.eval_raw(env)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_raw(env)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval_raw(env)?),
                    Func::Max => a.max(args[1].eval_raw(env)?),
                }
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(ExprError::NonFinite(self.to_string()))
        }
    }
}

/// Fully parenthesized rendering; reparsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c}"),
            Expr::Pi => f.write_str("pi"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Which coefficient an expression stands for; fixes the allowed variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotKind {
    /// `α(t, x, w)`
    Alpha,
    /// `β(t, x, u, w)`
    Beta,
    /// `a(t, x)`
    SourceA,
    /// `b(t, x)`
    SourceB,
    /// `u₀(x)` or `w₀(x)`
    Init,
}

impl SlotKind {
    /// `y` is the second space coordinate and is allowed wherever `x` is.
    pub fn allowed(self) -> &'static [Var] {
        match self {
            SlotKind::Alpha => &[Var::T, Var::X, Var::Y, Var::W],
            SlotKind::Beta => &[Var::T, Var::X, Var::Y, Var::U, Var::W],
            SlotKind::SourceA | SlotKind::SourceB => &[Var::T, Var::X, Var::Y],
            SlotKind::Init => &[Var::X, Var::Y],
        }
    }

    pub fn allows(self, v: Var) -> bool {
        self.allowed().contains(&v)
    }
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotKind::Alpha => "alpha(t,x,w)",
            SlotKind::Beta => "beta(t,x,u,w)",
            SlotKind::SourceA => "a(t,x)",
            SlotKind::SourceB => "b(t,x)",
            SlotKind::Init => "initial datum (x)",
        })
    }
}

/// Evaluation environment. Unset variables are an error only if referenced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub t: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub u: Option<f64>,
    pub w: Option<f64>,
}

impl Env {
    pub fn at(t: f64, x: f64, y: f64) -> Self {
        Self {
            t: Some(t),
            x: Some(x),
            y: Some(y),
            u: None,
            w: None,
        }
    }

    pub fn with_u(mut self, u: f64) -> Self {
        self.u = Some(u);
        self
    }

    pub fn with_w(mut self, w: f64) -> Self {
        self.w = Some(w);
        self
    }

    fn get(&self, v: Var) -> Option<f64> {
        match v {
            Var::T => self.t,
            Var::X => self.x,
            Var::Y => self.y,
            Var::U => self.u,
            Var::W => self.w,
        }
    }
}

/// A parsed, slot-checked coefficient expression.
#[derive(Debug, Clone)]
pub struct CoeffExpr {
    ast: Arc<Expr>,
    slot: SlotKind,
    source: String,
}

impl PartialEq for CoeffExpr {
    fn eq(&self, other: &Self) -> bool {
        self.slot == other.slot && self.ast == other.ast
    }
}

impl CoeffExpr {
    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn slot(&self) -> SlotKind {
        self.slot
    }

    /// The text the expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn references(&self, v: Var) -> bool {
        self.ast.references(v)
    }

    /// True when the expression does not depend on `t`, `u` or `w`
    /// (and can be sampled once per grid).
    pub fn is_stationary(&self) -> bool {
        !(self.references(Var::T) || self.references(Var::U) || self.references(Var::W))
    }

    pub fn eval(&self, env: &Env) -> Result<f64, ExprError> {
        self.ast.eval_raw(env)
    }
}

impl fmt::Display for CoeffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

/// Parses `src` for the given slot.
pub fn parse(src: &str, slot: SlotKind) -> Result<CoeffExpr, ExprError> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
        slot,
        end: src.len(),
    };
    if tokens.is_empty() {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let ast = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Syntax {
            pos: t.pos,
            msg: format!("unexpected {}", t.kind.describe()),
        });
    }
    Ok(CoeffExpr {
        ast: Arc::new(ast),
        slot,
        source: src.trim().to_string(),
    })
}

/// Evaluates `e` at `env`.
pub fn eval(e: &CoeffExpr, env: &Env) -> Result<f64, ExprError> {
    e.eval(env)
}

/// Pointwise evaluation at the cell centers of `grid` at time `t`.
///
/// `u` and `w` must be supplied whenever the expression references them.
pub fn sample_field(
    e: &CoeffExpr,
    grid: &Arc<Grid>,
    t: f64,
    u: Option<&Field>,
    w: Option<&Field>,
) -> Result<Field, ExprError> {
    for (var, field) in [(Var::U, u), (Var::W, w)] {
        if field.is_none() && e.references(var) {
            return Err(ExprError::MissingVariable(var.name().into()));
        }
    }
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let p = grid.center(k);
        let mut env = Env::at(t, p[0], p[1]);
        env.u = u.map(|f| f.values()[k]);
        env.w = w.map(|f| f.values()[k]);
        let v = e.eval(&env).map_err(|err| ExprError::NonFiniteAt {
            cell: k,
            source: Box::new(err),
        })?;
        values.push(v);
    }
    Ok(Field::from_parts(grid.clone(), values))
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(c) => format!("number {c}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Op(c) => format!("`{c}`"),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
            TokKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    if let Some(pos) = src.find(|c: char| !c.is_ascii()) {
        return Err(ExprError::Syntax {
            pos,
            msg: "non-ASCII character".into(),
        });
    }
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Token {
                    kind: TokKind::Op(c),
                    pos: start,
                });
                i += 1;
            }
            '(' | ')' | ',' => {
                let kind = match c {
                    '(' => TokKind::LParen,
                    ')' => TokKind::RParen,
                    _ => TokKind::Comma,
                };
                out.push(Token { kind, pos: start });
                i += 1;
            }
            '0'..='9' | '.' => {
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                if i < b.len() && b[i] == b'.' {
                    i += 1;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        while j < b.len() && b[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                out.push(Token {
                    kind: TokKind::Num(value),
                    pos: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokKind::Ident(src[start..i].to_string()),
                    pos: start,
                });
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    slot: SlotKind,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_op(&self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokKind::Op(c), ..
            }) if ops.contains(c) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, kind: TokKind) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let msg = format!("expected {}, found {}", kind.describe(), t.kind.describe());
                self.syntax(msg)
            }
            None => self.syntax(format!("expected {}, found end of input", kind.describe())),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek_op(&['+', '-']) {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek_op(&['*', '/']) {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek_op(&['-']).is_some() {
            self.pos += 1;
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek_op(&['^']).is_some() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return self.syntax("unexpected end of input");
        };
        self.pos += 1;
        match tok.kind {
            TokKind::Num(c) => Ok(Expr::Num(c)),
            TokKind::LParen => {
                let e = self.expr()?;
                self.expect(TokKind::RParen)?;
                Ok(e)
            }
            TokKind::Ident(name) => {
                let is_call = matches!(self.peek(), Some(Token { kind: TokKind::LParen, .. }));
                if let Some(func) = Func::from_name(&name) {
                    if !is_call {
                        self.pos -= 1;
                        return self.syntax(format!("function `{name}` must be called"));
                    }
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek(), Some(Token { kind: TokKind::Comma, .. })) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(TokKind::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Syntax {
                            pos: tok.pos,
                            msg: format!(
                                "`{name}` takes {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                match Var::from_name(&name) {
                    Some(v) if self.slot.allows(v) => Ok(Expr::Var(v)),
                    _ => Err(ExprError::ForbiddenVariable {
                        name,
                        slot: self.slot,
                    }),
                }
            }
            other => Err(ExprError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(src: &str) -> f64 {
        parse(src, SlotKind::SourceA)
            .unwrap()
            .eval(&Env::at(0.0, 0.0, 0.0))
            .unwrap()
    }

    #[test]
    fn precedence_example() {
        assert_eq!(value("2+3*4"), 14.0);
    }

    #[test]
    fn logistic_alpha_is_valid() {
        let e = parse("1 - w", SlotKind::Alpha).unwrap();
        assert_eq!(e.eval(&Env::at(0.0, 0.0, 0.0).with_w(0.25)).unwrap(), 0.75);
    }

    #[test]
    fn slot_rule_rejects_u_in_b() {
        match parse("u*w", SlotKind::SourceB) {
            Err(ExprError::ForbiddenVariable { name, slot }) => {
                assert_eq!(name, "u");
                assert_eq!(slot, SlotKind::SourceB);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eval_examples() {
        let e = parse("exp(-t)*sin(x)", SlotKind::SourceA).unwrap();
        assert_eq!(e.eval(&Env::at(0.0, 0.0, 0.0)).unwrap(), 0.0);
        let clamp = parse("min(1, max(0, w))", SlotKind::Alpha).unwrap();
        assert_eq!(clamp.eval(&Env::at(0.0, 0.0, 0.0).with_w(2.0)).unwrap(), 1.0);
        assert!((value("tanh(3*0.5)") - 1.5f64.tanh()).abs() < 1e-15);
        assert!((value("tanh(3*0.5)") - 0.905_148_253_6).abs() < 1e-9);
    }

    #[test]
    fn non_finite_results_are_errors() {
        for src in ["1/0", "0^(-1)", "exp(1000)", "(-8)^0.5"] {
            let e = parse(src, SlotKind::SourceA).unwrap();
            assert!(
                matches!(e.eval(&Env::at(0.0, 0.0, 0.0)), Err(ExprError::NonFinite(_))),
                "{src}"
            );
        }
    }

    #[test]
    fn missing_variable() {
        let e = parse("w", SlotKind::Alpha).unwrap();
        assert!(matches!(
            e.eval(&Env::at(0.0, 0.0, 0.0)),
            Err(ExprError::MissingVariable(_))
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse("1 + * 2", SlotKind::SourceA) {
            Err(ExprError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("", SlotKind::SourceA), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("(1", SlotKind::SourceA), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("exp", SlotKind::SourceA), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("min(1)", SlotKind::SourceA), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("2 # 3", SlotKind::SourceA), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x²", SlotKind::SourceA), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn init_slot_rejects_time() {
        assert!(matches!(
            parse("sin(pi*x)*t", SlotKind::Init),
            Err(ExprError::ForbiddenVariable { .. })
        ));
    }

    #[test]
    fn sample_field_examples() {
        let g = Grid::interval(0.0, 1.0, 8).unwrap();
        let one = parse("1", SlotKind::Alpha).unwrap();
        let w = Field::constant(&g, 0.3);
        let f = sample_field(&one, &g, 0.0, None, Some(&w)).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));

        let beta = parse("-w", SlotKind::Beta).unwrap();
        let w = Field::constant(&g, 0.5);
        let f = sample_field(&beta, &g, 0.0, None, Some(&w)).unwrap();
        assert!(f.values().iter().all(|&v| v == -0.5));

        let a = parse("sin(pi*x)", SlotKind::SourceA).unwrap();
        let f = sample_field(&a, &g, 0.0, None, None).unwrap();
        for (k, v) in f.values().iter().enumerate() {
            let x = g.center(k)[0];
            assert_eq!(*v, (std::f64::consts::PI * x).sin());
        }
    }

    #[test]
    fn sample_field_reports_cell() {
        let g = Grid::interval(0.0, 1.0, 8).unwrap();
        let e = parse("1/(x - 0.5625)", SlotKind::SourceA).unwrap();
        match sample_field(&e, &g, 0.0, None, None) {
            Err(ExprError::NonFiniteAt { cell, .. }) => assert_eq!(cell, 4),
            other => panic!("unexpected {other:?}"),
        }
        let beta = parse("u", SlotKind::Beta).unwrap();
        assert!(matches!(
            sample_field(&beta, &g, 0.0, None, None),
            Err(ExprError::MissingVariable(_))
        ));
    }
}
