//! Arithmetic expressions in `x` for coefficient entries.
//!
//! Precedence from loosest to tightest: `+ -`, `* /`, unary sign, `^`.
//! `^` is right associative and its exponent may carry its own sign, so
//! `-x^2 = -(x^2)`, `2^3^2 = 2^9` and `2^-1 = 0.5`. Names: `x`, `i`, `pi`,
//! `e`, any configured parameter, and the functions `sin cos sinh cosh exp
//! log sqrt abs`.

use std::collections::BTreeMap;
use std::fmt;

use detline_core::numcore::Complex64;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprAst {
    Num(f64),
    /// The imaginary unit.
    Imag,
    Var,
    Param(String),
    Neg(Box<ExprAst>),
    Binary(BinOp, Box<ExprAst>, Box<ExprAst>),
    Call(Func, Box<ExprAst>),
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("{message} at position {position}")]
pub struct ExprParseError {
    /// 0-based character offset.
    pub position: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("{0} of nonpositive real {1} (enable complex expressions)")]
    Domain(&'static str, f64),
    #[error("non-finite value at x = {0}")]
    NonFinite(f64),
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ExprParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let start = i;
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent only when digits follow, so `2e` stays `2 e`
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| ExprParseError {
                position: start,
                message: format!("malformed number `{s}`"),
            })?;
            out.push((start, Token::Num(v)));
        } else if ch.is_alphabetic() || ch == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Token::Ident(chars[start..i].iter().collect())));
        } else {
            let tok = match ch {
                '+' | '-' | '*' | '/' | '^' => Token::Op(ch),
                '(' => Token::LParen,
                ')' => Token::RParen,
                _ => {
                    return Err(ExprParseError { position: start, message: format!("unexpected character `{ch}`") })
                }
            };
            out.push((start, tok));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprParseError> {
        Err(ExprParseError { position: self.offset(), message: message.into() })
    }

    fn expr(&mut self) -> Result<ExprAst, ExprParseError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ExprAst, ExprParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ExprAst, ExprParseError> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(ExprAst::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<ExprAst, ExprParseError> {
        let base = self.primary()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(ExprAst::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<ExprAst, ExprParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.error("unexpected end of expression");
        };
        match tok {
            Token::Num(v) => {
                self.pos += 1;
                Ok(ExprAst::Num(v))
            }
            Token::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return self.error("expected `)`");
                }
                self.pos += 1;
                Ok(inner)
            }
            Token::Ident(name) => {
                let at = self.offset();
                self.pos += 1;
                if let Some(f) = Func::from_name(&name) {
                    if self.peek() != Some(&Token::LParen) {
                        return self.error(format!("expected `(` after `{name}`"));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(&Token::RParen) {
                        return self.error("expected `)`");
                    }
                    self.pos += 1;
                    return Ok(ExprAst::Call(f, Box::new(arg)));
                }
                if self.peek() == Some(&Token::LParen) {
                    return Err(ExprParseError { position: at, message: format!("unknown function `{name}`") });
                }
                Ok(match name.as_str() {
                    "x" => ExprAst::Var,
                    "i" => ExprAst::Imag,
                    "pi" => ExprAst::Num(std::f64::consts::PI),
                    "e" => ExprAst::Num(std::f64::consts::E),
                    _ => ExprAst::Param(name),
                })
            }
            Token::Op(c) => self.error(format!("unexpected `{c}`")),
            Token::RParen => self.error("unexpected `)`"),
        }
    }
}

/// Parses `text` into an expression tree.
pub fn parse_expr(text: &str) -> Result<ExprAst, ExprParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, end: text.chars().count() };
    let ast = p.expr()?;
    if p.pos != p.tokens.len() {
        return p.error("unexpected trailing input");
    }
    Ok(ast)
}

/// Parameter values by name.
pub type Params = BTreeMap<String, Complex64>;

fn real(z: Complex64) -> Option<f64> {
    (z.im == 0.0).then_some(z.re)
}

impl ExprAst {
    /// Whether the expression mentions `x`.
    pub fn depends_on_x(&self) -> bool {
        match self {
            ExprAst::Var => true,
            ExprAst::Num(_) | ExprAst::Imag | ExprAst::Param(_) => false,
            ExprAst::Neg(a) | ExprAst::Call(_, a) => a.depends_on_x(),
            ExprAst::Binary(_, a, b) => a.depends_on_x() || b.depends_on_x(),
        }
    }

    /// Parameter names referenced by the expression.
    pub fn parameters(&self, out: &mut Vec<String>) {
        match self {
            ExprAst::Param(p) => out.push(p.clone()),
            ExprAst::Neg(a) | ExprAst::Call(_, a) => a.parameters(out),
            ExprAst::Binary(_, a, b) => {
                a.parameters(out);
                b.parameters(out);
            }
            _ => {}
        }
    }

    /// Value at `x`. Without `complex`, `log`, `sqrt` and fractional powers
    /// of nonpositive reals are domain errors.
    pub fn eval(&self, x: f64, params: &Params, complex: bool) -> Result<Complex64, EvalError> {
        let v = self.eval_inner(x, params, complex)?;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(EvalError::NonFinite(x));
        }
        Ok(v)
    }

    fn eval_inner(&self, x: f64, params: &Params, complex: bool) -> Result<Complex64, EvalError> {
        let ev = |e: &ExprAst| e.eval_inner(x, params, complex);
        Ok(match self {
            ExprAst::Num(v) => Complex64::new(*v, 0.0),
            ExprAst::Imag => Complex64::i(),
            ExprAst::Var => Complex64::new(x, 0.0),
            ExprAst::Param(p) => *params.get(p).ok_or_else(|| EvalError::UnknownParameter(p.clone()))?,
            ExprAst::Neg(a) => -ev(a)?,
            ExprAst::Binary(op, a, b) => {
                let (u, v) = (ev(a)?, ev(b)?);
                match op {
                    BinOp::Add => u + v,
                    BinOp::Sub => u - v,
                    BinOp::Mul => u * v,
                    BinOp::Div => {
                        if v == Complex64::new(0.0, 0.0) {
                            return Err(EvalError::NonFinite(x));
                        }
                        u / v
                    }
                    BinOp::Pow => power(u, v, complex)?,
                }
            }
            ExprAst::Call(f, a) => {
                let u = ev(a)?;
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Sinh => u.sinh(),
                    Func::Cosh => u.cosh(),
                    Func::Exp => u.exp(),
                    Func::Abs => Complex64::new(u.norm(), 0.0),
                    Func::Log => match real(u) {
                        Some(r) if r > 0.0 => Complex64::new(r.ln(), 0.0),
                        Some(r) if !complex || r == 0.0 => return Err(EvalError::Domain("log", r)),
                        _ => u.ln(),
                    },
                    Func::Sqrt => match real(u) {
                        Some(r) if r >= 0.0 => Complex64::new(r.sqrt(), 0.0),
                        Some(r) if !complex => return Err(EvalError::Domain("sqrt", r)),
                        _ => u.sqrt(),
                    },
                }
            }
        })
    }
}

fn power(u: Complex64, v: Complex64, complex: bool) -> Result<Complex64, EvalError> {
    match (real(u), real(v)) {
        (Some(b), Some(p)) if p.fract() == 0.0 && p.abs() < 1e9 => Ok(Complex64::new(b.powi(p as i32), 0.0)),
        (Some(b), Some(p)) if b >= 0.0 => Ok(Complex64::new(b.powf(p), 0.0)),
        (Some(b), Some(_)) if !complex => Err(EvalError::Domain("fractional power", b)),
        _ => {
            if u == Complex64::new(0.0, 0.0) {
                return Ok(u);
            }
            Ok(u.powc(v))
        }
    }
}

fn precedence(e: &ExprAst) -> u8 {
    match e {
        ExprAst::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        ExprAst::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        ExprAst::Neg(_) => 3,
        ExprAst::Binary(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &ExprAst, min: u8| -> fmt::Result {
            if precedence(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            ExprAst::Num(v) => write!(f, "{v:?}"),
            ExprAst::Imag => write!(f, "i"),
            ExprAst::Var => write!(f, "x"),
            ExprAst::Param(p) => write!(f, "{p}"),
            ExprAst::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            ExprAst::Call(func, a) => write!(f, "{}({a})", func.name()),
            ExprAst::Binary(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                if *op == BinOp::Pow {
                    wrap(f, a, 5)?;
                    write!(f, "^")?;
                    return wrap(f, b, 3);
                }
                wrap(f, a, p)?;
                write!(f, " {sym} ")?;
                wrap(f, b, p + 1)
            }
        }
    }
}
