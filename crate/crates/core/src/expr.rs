//! Small expression language for boundary data and geometric predicates.
//!
//! Problem files describe tractions, prescribed displacements and boundary
//! predicates as text (`"0.5 + sin(2*pi*x1)"`, `"x2 == 0"`). The grammar is
//! deliberately tiny: arithmetic, comparisons, `sin`/`cos`/`abs`/`sqrt`/`exp`,
//! `min`/`max`, and `if(cond, a, b)` with `and`/`or`/`not` for compound
//! predicates. Variables are the coordinates `x1`, `x2` and time `t`; `pi` is
//! a constant. Comparisons return 1.0/0.0; `==` and `!=` compare within an
//! absolute tolerance of 1e-9 so `"x1 == 0"` works as a boundary predicate on
//! floating-point node coordinates.

use crate::error::{Error, Result};

/// Tolerance used by `==` / `!=` so coordinate predicates tolerate roundoff.
pub const EQ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X1,
    X2,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Abs,
    Sqrt,
    Exp,
    Min,
    Max,
    If,
    And,
    Or,
    Not,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Sin | Func::Cos | Func::Abs | Func::Sqrt | Func::Exp | Func::Not => 1,
            Func::Min | Func::Max | Func::And | Func::Or => 2,
            Func::If => 3,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "min" => Func::Min,
            "max" => Func::Max,
            "if" => Func::If,
            "and" => Func::And,
            "or" => Func::Or,
            "not" => Func::Not,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Evaluation environment. Components that do not apply (e.g. `t` for a
/// static problem) default to zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub x1: f64,
    pub x2: f64,
    pub t: f64,
}

impl Env {
    pub fn point(x: &[f64]) -> Env {
        Env {
            x1: x[0],
            x2: if x.len() > 1 { x[1] } else { 0.0 },
            t: 0.0,
        }
    }
}

impl Expr {
    pub fn eval(&self, env: Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X1) => env.x1,
            Expr::Var(Var::X2) => env.x2,
            Expr::Var(Var::T) => env.t,
            Expr::Neg(e) => -e.eval(env),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Lt => bool_val(a < b),
                    BinOp::Le => bool_val(a <= b),
                    BinOp::Gt => bool_val(a > b),
                    BinOp::Ge => bool_val(a >= b),
                    BinOp::Eq => bool_val((a - b).abs() <= EQ_TOL),
                    BinOp::Ne => bool_val((a - b).abs() > EQ_TOL),
                }
            }
            Expr::Call(f, args) => {
                let a = |i: usize| args[i].eval(env);
                match f {
                    Func::Sin => a(0).sin(),
                    Func::Cos => a(0).cos(),
                    Func::Abs => a(0).abs(),
                    Func::Sqrt => a(0).sqrt(),
                    Func::Exp => a(0).exp(),
                    Func::Min => a(0).min(a(1)),
                    Func::Max => a(0).max(a(1)),
                    Func::If => {
                        if a(0) != 0.0 {
                            a(1)
                        } else {
                            a(2)
                        }
                    }
                    Func::And => bool_val(a(0) != 0.0 && a(1) != 0.0),
                    Func::Or => bool_val(a(0) != 0.0 || a(1) != 0.0),
                    Func::Not => bool_val(a(0) == 0.0),
                }
            }
        }
    }

    /// Evaluate as a predicate (nonzero = true).
    pub fn test(&self, env: Env) -> bool {
        self.eval(env) != 0.0
    }
}

fn bool_val(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Parse a single expression.
pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_end()?;
    Ok(e)
}

/// Parse a comma-separated list of expressions, e.g. a traction `"x1, 0"`.
pub fn parse_list(src: &str) -> Result<Vec<Expr>> {
    let mut p = Parser::new(src)?;
    let mut out = vec![p.expr()?];
    while p.eat(&Tok::Comma) {
        out.push(p.expr()?);
    }
    p.expect_end()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Parser> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(Error::parse(1, format!("expected {what}")))
        }
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(Error::parse(1, "trailing input after expression"))
        }
    }

    // expr := add (cmp add)?
    fn expr(&mut self) -> Result<Expr> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Some(Tok::Lt) => BinOp::Lt,
            Some(Tok::Le) => BinOp::Le,
            Some(Tok::Gt) => BinOp::Gt,
            Some(Tok::Ge) => BinOp::Ge,
            Some(Tok::EqEq) => BinOp::Eq,
            Some(Tok::Ne) => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.add()?;
        Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn add(&mut self) -> Result<Expr> {
        let mut e = self.mul()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.mul()?;
            e = Expr::Bin(op, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn mul(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            e = Expr::Bin(op, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(&Tok::RParen, ")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x1" => Ok(Expr::Var(Var::X1)),
                "x2" => Ok(Expr::Var(Var::X2)),
                "t" => Ok(Expr::Var(Var::T)),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                _ => {
                    let f = Func::from_name(&name)
                        .ok_or_else(|| Error::parse(1, format!("unknown identifier `{name}`")))?;
                    self.expect(&Tok::LParen, "( after function name")?;
                    let mut args = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.expr()?);
                    }
                    self.expect(&Tok::RParen, ")")?;
                    if args.len() != f.arity() {
                        return Err(Error::parse(
                            1,
                            format!("{name} takes {} argument(s), got {}", f.arity(), args.len()),
                        ));
                    }
                    Ok(Expr::Call(f, args))
                }
            },
            other => Err(Error::parse(1, format!("unexpected token {other:?}"))),
        }
    }
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '/' => {
                toks.push(Tok::Slash);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            '<' | '>' | '=' | '!' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                toks.push(match (c, two) {
                    ('<', true) => Tok::Le,
                    ('<', false) => Tok::Lt,
                    ('>', true) => Tok::Ge,
                    ('>', false) => Tok::Gt,
                    ('=', true) => Tok::EqEq,
                    ('!', true) => Tok::Ne,
                    _ => return Err(Error::parse(1, format!("stray `{c}`"))),
                });
                i += if two { 2 } else { 1 };
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_digit() || d == '.' {
                        i += 1;
                    } else if (d == 'e' || d == 'E')
                        && i > start
                        && bytes
                            .get(i + 1)
                            .is_some_and(|&n| n.is_ascii_digit() || n == b'+' || n == b'-')
                    {
                        i += 2;
                    } else {
                        break;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::parse(1, format!("bad number `{text}`")))?;
                toks.push(Tok::Num(v));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_alphanumeric() || d == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                toks.push(Tok::Ident(src[start..i].to_string()));
            }
            _ => return Err(Error::parse(1, format!("unexpected character `{c}`"))),
        }
    }
    Ok(toks)
}
