//! Small expression language for potentials.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;
//! primary = number | variable | "r" | "pi" | func "(" expr { "," expr } ")" | "(" expr ")" ;
//! variable= "x" digit { digit } | "z" ;      (* x1 .. xn, 1-based; z = x1 in 1-D *)
//! func    = "sin" | "cos" | "exp" | "tan" | "tanh" | "abs" | "sqrt" | "min" | "max" ;
//! number  = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;
//! ```
//!
//! `r` is the Euclidean norm of the point. `^` is right associative and binds
//! tighter than unary minus, so `-x1^2` is `-(x1^2)`. Constant subtrees are
//! folded at parse time.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tan,
    Tanh,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "tan" => Self::Tan,
            "tanh" => Self::Tanh,
            "abs" => Self::Abs,
            "sqrt" => Self::Sqrt,
            "min" => Self::Min,
            "max" => Self::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Tan => "tan",
            Self::Tanh => "tanh",
            Self::Abs => "abs",
            Self::Sqrt => "sqrt",
            Self::Min => "min",
            Self::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Self::Min | Self::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr<T> {
    Num(T),
    /// Zero-based coordinate index (`x1` is `Var(0)`).
    Var(usize),
    Radius,
    Neg(Box<Expr<T>>),
    Add(Box<Expr<T>>, Box<Expr<T>>),
    Sub(Box<Expr<T>>, Box<Expr<T>>),
    Mul(Box<Expr<T>>, Box<Expr<T>>),
    Div(Box<Expr<T>>, Box<Expr<T>>),
    Pow(Box<Expr<T>>, Box<Expr<T>>),
    Call(Func, Vec<Expr<T>>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected one of {}, found {found}", expected.iter().cloned().collect::<Vec<_>>().join(" "))]
    Syntax {
        offset: usize,
        expected: BTreeSet<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable x{index} at byte {offset} exceeds dimension {dimension}")]
    VariableOutOfRange {
        offset: usize,
        index: usize,
        dimension: usize,
    },
    #[error("function {name} at byte {offset} takes {expected} argument(s), got {got}")]
    Arity {
        offset: usize,
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("constant subexpression ending at byte {offset} is not finite")]
    NonFinite { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            Self::Syntax { offset, .. }
            | Self::UnknownIdentifier { offset, .. }
            | Self::VariableOutOfRange { offset, .. }
            | Self::Arity { offset, .. }
            | Self::NonFinite { offset } => *offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Op(c) => write!(f, "`{c}`"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
    dimension: usize,
}

fn expected(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, dimension: usize) -> Result<Self, ParseError> {
        let mut p = Self {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
            dimension,
        };
        p.advance()?;
        Ok(p)
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        if self.pos >= bytes.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = bytes[self.pos];
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                let mut look = self.pos + 1;
                if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                    look += 1;
                }
                if look < bytes.len() && bytes[look].is_ascii_digit() {
                    self.pos = look;
                    while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
            }
            let text = &self.src[start..self.pos];
            let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                offset: start,
                expected: expected(&["number"]),
                found: format!("`{text}`"),
            })?;
            self.tok = Tok::Num(value);
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                self.pos += 1;
            }
            self.tok = Tok::Ident(self.src[start..self.pos].to_string());
        } else if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            self.tok = Tok::Op(c as char);
        } else {
            let ch = self.src[self.pos..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                offset: self.pos,
                expected: expected(&["number", "identifier", "operator"]),
                found: format!("`{ch}`"),
            });
        }
        Ok(())
    }

    fn syntax<T>(&self, items: &[&str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.tok_start,
            expected: expected(items),
            found: self.tok.to_string(),
        })
    }

    fn expr<T: Real>(&mut self) -> Result<Expr<T>, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.advance()?;
                    let rhs = self.term()?;
                    lhs = self.fold(Expr::Add(Box::new(lhs), Box::new(rhs)))?;
                }
                Tok::Op('-') => {
                    self.advance()?;
                    let rhs = self.term()?;
                    lhs = self.fold(Expr::Sub(Box::new(lhs), Box::new(rhs)))?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term<T: Real>(&mut self) -> Result<Expr<T>, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.advance()?;
                    let rhs = self.unary()?;
                    lhs = self.fold(Expr::Mul(Box::new(lhs), Box::new(rhs)))?;
                }
                Tok::Op('/') => {
                    self.advance()?;
                    let rhs = self.unary()?;
                    lhs = self.fold(Expr::Div(Box::new(lhs), Box::new(rhs)))?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary<T: Real>(&mut self) -> Result<Expr<T>, ParseError> {
        if self.tok == Tok::Op('-') {
            self.advance()?;
            let inner = self.unary()?;
            return self.fold(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power<T: Real>(&mut self) -> Result<Expr<T>, ParseError> {
        let base = self.primary()?;
        if self.tok == Tok::Op('^') {
            self.advance()?;
            let exp = self.unary()?;
            return self.fold(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary<T: Real>(&mut self) -> Result<Expr<T>, ParseError> {
        let start = self.tok_start;
        match self.tok.clone() {
            Tok::Num(x) => {
                self.advance()?;
                Ok(Expr::Num(lit(x)))
            }
            Tok::Op('(') => {
                self.advance()?;
                let e = self.expr()?;
                if self.tok != Tok::Op(')') {
                    return self.syntax(&["`)`", "operator"]);
                }
                self.advance()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.advance()?;
                if name == "r" {
                    return Ok(Expr::Radius);
                }
                if name == "pi" {
                    return Ok(Expr::Num(T::PI()));
                }
                if name == "z" && self.dimension == 1 {
                    return Ok(Expr::Var(0));
                }
                if let Some(func) = Func::from_name(&name) {
                    if self.tok != Tok::Op('(') {
                        return self.syntax(&["`(`"]);
                    }
                    self.advance()?;
                    let mut args = vec![self.expr()?];
                    while self.tok == Tok::Op(',') {
                        self.advance()?;
                        args.push(self.expr()?);
                    }
                    if self.tok != Tok::Op(')') {
                        return self.syntax(&["`)`", "`,`", "operator"]);
                    }
                    self.advance()?;
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity {
                            offset: start,
                            name: func.name(),
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    return self.fold(Expr::Call(func, args));
                }
                if let Some(digits) = name.strip_prefix('x') {
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                        let index: usize = digits.parse().unwrap_or(usize::MAX);
                        if index == 0 || index > self.dimension {
                            return Err(ParseError::VariableOutOfRange {
                                offset: start,
                                index,
                                dimension: self.dimension,
                            });
                        }
                        return Ok(Expr::Var(index - 1));
                    }
                }
                Err(ParseError::UnknownIdentifier { offset: start, name })
            }
            _ => self.syntax(&["number", "variable", "`r`", "function", "`(`", "`-`"]),
        }
    }

    fn fold<T: Real>(&self, e: Expr<T>) -> Result<Expr<T>, ParseError> {
        let all_const = match &e {
            Expr::Neg(a) => a.as_num().is_some(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.as_num().is_some() && b.as_num().is_some()
            }
            Expr::Call(_, args) => args.iter().all(|a| a.as_num().is_some()),
            _ => false,
        };
        if !all_const {
            return Ok(e);
        }
        let v = e.eval(&[]);
        if !v.is_finite() {
            return Err(ParseError::NonFinite { offset: self.tok_start });
        }
        Ok(Expr::Num(v))
    }
}

/// Parses `text` as an expression in `dimension` variables.
pub fn parse<T: Real>(text: &str, dimension: usize) -> Result<Expr<T>, ParseError> {
    let mut p = Parser::new(text, dimension)?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.syntax(&["operator", "end of input"]);
    }
    Ok(e)
}

impl<T: Real> Expr<T> {
    pub fn as_num(&self) -> Option<T> {
        match self {
            Expr::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[T]) -> T {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Radius => x.iter().map(|&v| v * v).sum::<T>().sqrt(),
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => pow(a.eval(x), b.eval(x)),
            Expr::Call(f, args) => {
                let u = args[0].eval(x);
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Exp => u.exp(),
                    Func::Tan => u.tan(),
                    Func::Tanh => u.tanh(),
                    Func::Abs => u.abs(),
                    Func::Sqrt => u.sqrt(),
                    Func::Min => u.min(args[1].eval(x)),
                    Func::Max => u.max(args[1].eval(x)),
                }
            }
        }
    }

    /// Value and directional derivative along `dir` (forward mode).
    pub fn eval_dual(&self, x: &[T], dir: &[T]) -> (T, T) {
        let zero = T::zero();
        match self {
            Expr::Num(c) => (*c, zero),
            Expr::Var(i) => (x[*i], dir[*i]),
            Expr::Radius => {
                let r = x.iter().map(|&v| v * v).sum::<T>().sqrt();
                if r == zero {
                    (zero, zero)
                } else {
                    let dr = x.iter().zip(dir).map(|(&a, &b)| a * b).sum::<T>() / r;
                    (r, dr)
                }
            }
            Expr::Neg(a) => {
                let (v, d) = a.eval_dual(x, dir);
                (-v, -d)
            }
            Expr::Add(a, b) => {
                let ((u, du), (v, dv)) = (a.eval_dual(x, dir), b.eval_dual(x, dir));
                (u + v, du + dv)
            }
            Expr::Sub(a, b) => {
                let ((u, du), (v, dv)) = (a.eval_dual(x, dir), b.eval_dual(x, dir));
                (u - v, du - dv)
            }
            Expr::Mul(a, b) => {
                let ((u, du), (v, dv)) = (a.eval_dual(x, dir), b.eval_dual(x, dir));
                (u * v, du * v + u * dv)
            }
            Expr::Div(a, b) => {
                let ((u, du), (v, dv)) = (a.eval_dual(x, dir), b.eval_dual(x, dir));
                (u / v, (du * v - u * dv) / (v * v))
            }
            Expr::Pow(a, b) => {
                let (u, du) = a.eval_dual(x, dir);
                let (p, dp) = b.eval_dual(x, dir);
                let v = pow(u, p);
                let mut d = if du == zero { zero } else { p * pow(u, p - T::one()) * du };
                if dp != zero {
                    d += v * u.ln() * dp;
                }
                (v, d)
            }
            Expr::Call(f, args) => {
                let (u, du) = args[0].eval_dual(x, dir);
                match f {
                    Func::Sin => (u.sin(), u.cos() * du),
                    Func::Cos => (u.cos(), -u.sin() * du),
                    Func::Exp => {
                        let e = u.exp();
                        (e, e * du)
                    }
                    Func::Tan => {
                        let t = u.tan();
                        (t, (T::one() + t * t) * du)
                    }
                    Func::Tanh => {
                        let t = u.tanh();
                        (t, (T::one() - t * t) * du)
                    }
                    Func::Abs => (u.abs(), if u == zero { zero } else { u.signum() * du }),
                    Func::Sqrt => {
                        let s = u.sqrt();
                        (s, if du == zero { zero } else { du / (s + s) })
                    }
                    Func::Min | Func::Max => {
                        let (v, dv) = args[1].eval_dual(x, dir);
                        let take_first = if *f == Func::Min { u <= v } else { u >= v };
                        if take_first {
                            (u, du)
                        } else {
                            (v, dv)
                        }
                    }
                }
            }
        }
    }

    /// Replaces `x1` by `r`; used to lift 1-D profiles to radial potentials.
    pub fn radialize(&self) -> Expr<T> {
        self.map_leaves(&|e| match e {
            Expr::Var(0) => Some(Expr::Radius),
            _ => None,
        })
    }

    /// Replaces `r` by `|x1|`.
    pub fn restrict_to_line(&self) -> Expr<T> {
        self.map_leaves(&|e| match e {
            Expr::Radius => Some(Expr::Call(Func::Abs, vec![Expr::Var(0)])),
            _ => None,
        })
    }

    fn map_leaves(&self, f: &dyn Fn(&Expr<T>) -> Option<Expr<T>>) -> Expr<T> {
        if let Some(e) = f(self) {
            return e;
        }
        let b = |e: &Expr<T>| Box::new(e.map_leaves(f));
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Radius => self.clone(),
            Expr::Neg(a) => Expr::Neg(b(a)),
            Expr::Add(l, r) => Expr::Add(b(l), b(r)),
            Expr::Sub(l, r) => Expr::Sub(b(l), b(r)),
            Expr::Mul(l, r) => Expr::Mul(b(l), b(r)),
            Expr::Div(l, r) => Expr::Div(b(l), b(r)),
            Expr::Pow(l, r) => Expr::Pow(b(l), b(r)),
            Expr::Call(func, args) => Expr::Call(*func, args.iter().map(|a| a.map_leaves(f)).collect()),
        }
    }

    /// Largest variable index used plus one (0 if none).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Radius => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.arity().max(b.arity())
            }
            Expr::Call(_, args) => args.iter().map(Expr::arity).max().unwrap_or(0),
        }
    }
}

fn pow<T: Real>(base: T, exp: T) -> T {
    if exp.fract() == T::zero() && exp.abs() < lit(1e9) {
        base.powi(exp.to_i32().unwrap_or(0))
    } else {
        base.powf(exp)
    }
}

/// Fully parenthesised form; parses back to the same tree.
impl<T: Real> fmt::Display for Expr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < T::zero() || (*c == T::zero() && c.is_sign_negative()) {
                    write!(f, "(-{})", -*c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Radius => write!(f, "r"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str, dim: usize) -> Expr<f64> {
        parse(s, dim).unwrap()
    }

    #[test]
    fn precedence_and_folding() {
        assert_eq!(p("1 + 2*3", 1), Expr::Num(7.0));
        assert_eq!(p("-2^2", 1), Expr::Num(-4.0));
        assert_eq!(p("2^3^2", 1), Expr::Num(512.0));
        assert_eq!(p("2^-1", 1), Expr::Num(0.5));
        assert_eq!(
            p("-1*x1^2", 1),
            Expr::Mul(
                Box::new(Expr::Num(-1.0)),
                Box::new(Expr::Pow(Box::new(Expr::Var(0)), Box::new(Expr::Num(2.0))))
            )
        );
        assert_eq!(p("1e-3", 1), Expr::Num(1e-3));
    }

    #[test]
    fn evaluates_at_points() {
        let e = p("0.5*(x1^2 + x2^2)", 2);
        assert_eq!(e.eval(&[1.0, 1.0]), 1.0);
        let e = p("max(x1, 2) + min(r, 0) + sqrt(4) + abs(-3)", 2);
        assert_eq!(e.eval(&[1.0, 0.0]), 2.0 + 0.0 + 2.0 + 3.0);
    }

    #[test]
    fn reports_errors_with_offsets() {
        match parse::<f64>("x3", 2) {
            Err(ParseError::VariableOutOfRange { index: 3, dimension: 2, offset: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse::<f64>("1 + foo", 1) {
            Err(ParseError::UnknownIdentifier { offset: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse::<f64>("(x1 + 2", 1) {
            Err(ParseError::Syntax { offset: 7, expected, .. }) => assert!(expected.contains("`)`")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse::<f64>("1 $ 2", 1), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse::<f64>("min(1)", 1), Err(ParseError::Arity { .. })));
        assert!(matches!(parse::<f64>("1/0", 1), Err(ParseError::NonFinite { .. })));
        assert!(matches!(parse::<f64>("", 1), Err(ParseError::Syntax { offset: 0, .. })));
    }

    #[test]
    fn dual_matches_hand_derivatives() {
        assert_eq!(p("z^2", 1).eval(&[3.0]), 9.0);
        assert!((p("tan(pi/4)", 1).eval(&[0.0]) - 1.0).abs() < 1e-15);
        assert!(parse::<f64>("z", 2).is_err());
        let e = p("sin(x1)*exp(x2) + tanh(r) + x1^3", 2);
        let x = [0.3, -0.7];
        let r = (0.3f64 * 0.3 + 0.49).sqrt();
        let sech2 = 1.0 - r.tanh().powi(2);
        let dx = 0.3f64.cos() * (-0.7f64).exp() + sech2 * 0.3 / r + 3.0 * 0.09;
        let dy = 0.3f64.sin() * (-0.7f64).exp() + sech2 * (-0.7) / r;
        assert!((e.eval_dual(&x, &[1.0, 0.0]).1 - dx).abs() < 1e-14);
        assert!((e.eval_dual(&x, &[0.0, 1.0]).1 - dy).abs() < 1e-14);
    }

    fn arb_expr() -> impl Strategy<Value = Expr<f64>> {
        let leaf = prop_oneof![
            (-50i32..50).prop_map(|n| Expr::Num(n as f64 / 4.0)),
            (0usize..2).prop_map(Expr::Var),
            Just(Expr::Radius),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), 1u8..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), Box::new(Expr::Num(k as f64)))),
                inner.clone().prop_map(|a| Expr::Call(Func::Tanh, vec![a])),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Call(Func::Max, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_is_a_fixed_point(e in arb_expr()) {
            let once: Expr<f64> = parse(&e.to_string(), 2).unwrap();
            let twice: Expr<f64> = parse(&once.to_string(), 2).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
