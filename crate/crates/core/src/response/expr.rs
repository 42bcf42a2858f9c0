//! Arithmetic expressions over inputs `x1..xm`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' digits | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{OuqError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Cos,
    Sin,
    Tanh,
    Exp,
    Log,
    Abs,
    Max,
    Min,
    Pos,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Cos,
        Func::Sin,
        Func::Tanh,
        Func::Exp,
        Func::Log,
        Func::Abs,
        Func::Max,
        Func::Min,
        Func::Pos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Max => "max",
            Func::Min => "min",
            Func::Pos => "pos",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Max | Func::Min => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based input index; printed as `x{index + 1}`.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let domain = |reason: String| OuqError::Evaluation {
            point: x.to_vec(),
            reason,
        };
        let y = match self {
            Expr::Num(c) => *c,
            Expr::Var(i) => *x
                .get(*i)
                .ok_or_else(|| domain(format!("x{} is out of range", i + 1)))?,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(x)?, r.eval(x)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(domain("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(x)?;
                match f {
                    Func::Cos => a.cos(),
                    Func::Sin => a.sin(),
                    Func::Tanh => a.tanh(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(domain(format!("log of non-positive {a}")));
                        }
                        a.ln()
                    }
                    Func::Abs => a.abs(),
                    Func::Pos => a.max(0.0),
                    Func::Max => a.max(args[1].eval(x)?),
                    Func::Min => a.min(args[1].eval(x)?),
                }
            }
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(domain(format!("non-finite result {y}")))
        }
    }

    /// Largest zero-based variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) => e.max_var(),
            Expr::Bin(_, l, r) => l.max_var().max(r.max_var()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_var).max(),
        }
    }

    /// Every zero-based variable index used, ascending and deduplicated.
    pub fn vars(&self) -> Vec<usize> {
        fn walk(e: &Expr, out: &mut Vec<usize>) {
            match e {
                Expr::Num(_) => {}
                Expr::Var(i) => out.push(*i),
                Expr::Neg(e) => walk(e, out),
                Expr::Bin(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {sym} {r})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (j, a) in args.iter().enumerate() {
                    if j > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Parsed expression; `Display` prints a fully parenthesized form that parses back to the same tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionAst {
    pub root: Expr,
}

impl ExpressionAst {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.root.eval(x)
    }

    /// Number of inputs the expression needs (highest `xi` index).
    pub fn arity(&self) -> usize {
        self.root.max_var().map_or(0, |i| i + 1)
    }
}

impl fmt::Display for ExpressionAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for ExpressionAst {
    type Err = OuqError;

    fn from_str(s: &str) -> Result<Self> {
        parse_expression(s)
    }
}

impl Serialize for ExpressionAst {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExpressionAst {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_expression(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(c) => format!("number {c}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| OuqError::Syntax {
                offset: start,
                expected: vec!["number".into()],
                found: format!("`{lit}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else if b"+-*/^(),".contains(&c) {
            out.push((Tok::Sym(c as char), i));
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(OuqError::Syntax {
                offset: i,
                expected: expected_operand(),
                found: format!("`{ch}`"),
            });
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

fn expected_operand() -> Vec<String> {
    ["number", "variable", "function", "(", "-"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T> {
        Err(OuqError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&c.to_string()])
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(c) => {
                self.bump();
                Ok(Expr::Num(c))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let offset = self.offset();
                self.bump();
                if let Some(var) = parse_var(&name) {
                    return Ok(Expr::Var(var));
                }
                let func = Func::from_name(&name).ok_or_else(|| OuqError::UnknownIdentifier {
                    name: name.clone(),
                    offset,
                })?;
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Sym(',') {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                if args.len() != func.arity() {
                    return Err(OuqError::Arity {
                        name,
                        expected: func.arity(),
                        got: args.len(),
                        offset,
                    });
                }
                Ok(Expr::Call(func, args))
            }
            _ => self.fail(&["number", "variable", "function", "(", "-"]),
        }
    }
}

fn parse_var(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse::<usize>().ok().map(|i| i - 1)
}

pub fn parse_expression(text: &str) -> Result<ExpressionAst> {
    if text.trim().is_empty() {
        return Err(OuqError::Syntax {
            offset: 0,
            expected: expected_operand(),
            found: "end of input".into(),
        });
    }
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail(&["+", "-", "*", "/", "^", "end of input"]);
    }
    Ok(ExpressionAst { root })
}
