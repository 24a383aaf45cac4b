//! Expression language for forcings and weights.
//!
//! Expressions are functions of the single variable `t`. The grammar, from
//! lowest to highest binding:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 't' | 'pi' | 'e' | name '(' sum ')' | '(' sum ')'
//! ```
//!
//! so `-t^2` is `-(t^2)` and `2^3^2` is `2^(3^2)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    /// Sign function with `sign(0) = 0`; appears in derivatives of `abs`.
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Log => {
                if x > 0.0 {
                    x.ln()
                } else {
                    f64::NAN
                }
            }
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sqrt => {
                if x >= 0.0 {
                    x.sqrt()
                } else {
                    f64::NAN
                }
            }
            Func::Abs => x.abs(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionExpr {
    Const(f64),
    Var,
    Neg(Box<FunctionExpr>),
    Add(Box<FunctionExpr>, Box<FunctionExpr>),
    Sub(Box<FunctionExpr>, Box<FunctionExpr>),
    Mul(Box<FunctionExpr>, Box<FunctionExpr>),
    Div(Box<FunctionExpr>, Box<FunctionExpr>),
    Pow(Box<FunctionExpr>, Box<FunctionExpr>),
    Call(Func, Box<FunctionExpr>),
}

use FunctionExpr as E;

fn bx(e: FunctionExpr) -> Box<FunctionExpr> {
    Box::new(e)
}

impl FunctionExpr {
    pub fn constant(c: f64) -> Self {
        E::Const(c)
    }

    pub fn var() -> Self {
        E::Var
    }

    pub fn call(f: Func, arg: FunctionExpr) -> Self {
        E::Call(f, bx(arg))
    }

    /// Evaluates without domain checks; invalid operations yield NaN.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            E::Const(c) => *c,
            E::Var => t,
            E::Neg(a) => -a.value(t),
            E::Add(a, b) => a.value(t) + b.value(t),
            E::Sub(a, b) => a.value(t) - b.value(t),
            E::Mul(a, b) => a.value(t) * b.value(t),
            E::Div(a, b) => {
                let d = b.value(t);
                if d == 0.0 {
                    f64::NAN
                } else {
                    a.value(t) / d
                }
            }
            E::Pow(a, b) => pow(a.value(t), b.value(t)),
            E::Call(f, a) => f.apply(a.value(t)),
        }
    }

    /// Evaluates at `t`, reporting the innermost node that left its domain.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let v = self.value(t);
        if !v.is_nan() {
            return Ok(v);
        }
        let node = self.offending_node(t).unwrap_or(self);
        Err(Error::Domain {
            node: node.to_string(),
            t,
        })
    }

    fn offending_node(&self, t: f64) -> Option<&FunctionExpr> {
        let children: Vec<&FunctionExpr> = match self {
            E::Const(_) | E::Var => vec![],
            E::Neg(a) | E::Call(_, a) => vec![a],
            E::Add(a, b) | E::Sub(a, b) | E::Mul(a, b) | E::Div(a, b) | E::Pow(a, b) => {
                vec![a, b]
            }
        };
        for c in children {
            if c.value(t).is_nan() {
                return c.offending_node(t).or(Some(c));
            }
        }
        if self.value(t).is_nan() {
            Some(self)
        } else {
            None
        }
    }

    /// Value together with a first-order bound on its rounding error, in
    /// units of machine epsilon. `t` itself is taken as exact.
    pub fn value_with_error(&self, t: f64) -> (f64, f64) {
        match self {
            E::Const(c) => (*c, c.abs()),
            E::Var => (t, 0.0),
            E::Neg(a) => {
                let (v, e) = a.value_with_error(t);
                (-v, e)
            }
            E::Add(a, b) | E::Sub(a, b) => {
                let (va, ea) = a.value_with_error(t);
                let (vb, eb) = b.value_with_error(t);
                let v = if matches!(self, E::Add(..)) { va + vb } else { va - vb };
                (v, ea + eb + v.abs())
            }
            E::Mul(a, b) => {
                let (va, ea) = a.value_with_error(t);
                let (vb, eb) = b.value_with_error(t);
                let v = va * vb;
                (v, vb.abs() * ea + va.abs() * eb + v.abs())
            }
            E::Div(a, b) => {
                let (va, ea) = a.value_with_error(t);
                let (vb, eb) = b.value_with_error(t);
                let v = if vb == 0.0 { f64::NAN } else { va / vb };
                (v, (ea + v.abs() * eb) / vb.abs() + v.abs())
            }
            E::Pow(a, b) => {
                let (va, ea) = a.value_with_error(t);
                let (vb, eb) = b.value_with_error(t);
                let v = pow(va, vb);
                let rel = if va == 0.0 { 0.0 } else { vb.abs() * ea / va.abs() + va.abs().ln().abs() * eb };
                (v, v.abs() * (rel + 1.0))
            }
            E::Call(f, a) => {
                let (va, ea) = a.value_with_error(t);
                let v = f.apply(va);
                let slope = match f {
                    Func::Exp => v.abs(),
                    Func::Log => 1.0 / va.abs(),
                    Func::Sin => va.cos().abs(),
                    Func::Cos => va.sin().abs(),
                    Func::Sqrt => 0.5 / v,
                    Func::Abs => 1.0,
                    Func::Sign => 0.0,
                };
                (v, slope * ea + v.abs())
            }
        }
    }

    pub fn differentiate(&self) -> FunctionExpr {
        simplify(self.derive())
    }

    fn derive(&self) -> FunctionExpr {
        match self {
            E::Const(_) => E::Const(0.0),
            E::Var => E::Const(1.0),
            E::Neg(a) => E::Neg(bx(a.derive())),
            E::Add(a, b) => E::Add(bx(a.derive()), bx(b.derive())),
            E::Sub(a, b) => E::Sub(bx(a.derive()), bx(b.derive())),
            E::Mul(a, b) => E::Add(
                bx(E::Mul(bx(a.derive()), b.clone())),
                bx(E::Mul(a.clone(), bx(b.derive()))),
            ),
            E::Div(a, b) => E::Div(
                bx(E::Sub(
                    bx(E::Mul(bx(a.derive()), b.clone())),
                    bx(E::Mul(a.clone(), bx(b.derive()))),
                )),
                bx(E::Pow(b.clone(), bx(E::Const(2.0)))),
            ),
            E::Pow(a, b) => {
                if let Some(c) = b.as_const() {
                    // c * a^(c-1) * a'
                    E::Mul(
                        bx(E::Mul(
                            bx(E::Const(c)),
                            bx(E::Pow(a.clone(), bx(E::Const(c - 1.0)))),
                        )),
                        bx(a.derive()),
                    )
                } else {
                    // a^b * (b' log a + b a' / a)
                    E::Mul(
                        bx(self.clone()),
                        bx(E::Add(
                            bx(E::Mul(bx(b.derive()), bx(E::call(Func::Log, (**a).clone())))),
                            bx(E::Div(bx(E::Mul(b.clone(), bx(a.derive()))), a.clone())),
                        )),
                    )
                }
            }
            E::Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => E::Div(bx(E::Const(1.0)), bx(inner)),
                    Func::Sin => E::call(Func::Cos, inner),
                    Func::Cos => E::Neg(bx(E::call(Func::Sin, inner))),
                    Func::Sqrt => E::Div(
                        bx(E::Const(1.0)),
                        bx(E::Mul(bx(E::Const(2.0)), bx(self.clone()))),
                    ),
                    Func::Abs => E::call(Func::Sign, inner),
                    Func::Sign => E::Const(0.0),
                };
                E::Mul(bx(outer), bx(a.derive()))
            }
        }
    }

    /// An expression for `log|self|`, with products, quotients, powers and
    /// exponentials unfolded so that very large weights such as `exp(t^2)`
    /// can be compared without overflow.
    pub fn log_form(&self) -> FunctionExpr {
        simplify(self.log_form_raw())
    }

    fn log_form_raw(&self) -> FunctionExpr {
        match self {
            E::Const(c) => E::Const(c.abs().ln()),
            E::Neg(a) => a.log_form_raw(),
            E::Mul(a, b) => E::Add(bx(a.log_form_raw()), bx(b.log_form_raw())),
            E::Div(a, b) => E::Sub(bx(a.log_form_raw()), bx(b.log_form_raw())),
            E::Pow(a, b) => E::Mul(b.clone(), bx(a.log_form_raw())),
            E::Call(Func::Exp, a) => (**a).clone(),
            E::Call(Func::Sqrt, a) => E::Mul(bx(E::Const(0.5)), bx(a.log_form_raw())),
            E::Call(Func::Abs, a) => a.log_form_raw(),
            _ => E::call(Func::Log, E::call(Func::Abs, self.clone())),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            E::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            E::Const(_) => true,
            E::Var => false,
            E::Neg(a) | E::Call(_, a) => a.is_constant(),
            E::Add(a, b) | E::Sub(a, b) | E::Mul(a, b) | E::Div(a, b) | E::Pow(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            E::Add(..) | E::Sub(..) => 1,
            E::Mul(..) | E::Div(..) => 2,
            E::Neg(_) => 3,
            E::Pow(..) => 4,
            E::Const(c) if c.is_sign_negative() => 3,
            E::Const(_) | E::Var | E::Call(..) => 5,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            E::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{}", c)
                }
            }
            E::Var => write!(f, "t"),
            E::Neg(a) => {
                write!(f, "-")?;
                a.write_prec(f, 3)
            }
            E::Add(a, b) => binary(f, a, "+", b, 1, 2),
            E::Sub(a, b) => binary(f, a, "-", b, 1, 2),
            E::Mul(a, b) => binary(f, a, "*", b, 2, 3),
            E::Div(a, b) => binary(f, a, "/", b, 2, 3),
            E::Pow(a, b) => binary(f, a, "^", b, 5, 3),
            E::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_prec(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

fn binary(
    f: &mut fmt::Formatter<'_>,
    a: &FunctionExpr,
    op: &str,
    b: &FunctionExpr,
    left: u8,
    right: u8,
) -> fmt::Result {
    a.write_prec(f, left)?;
    write!(f, "{}", op)?;
    b.write_prec(f, right)
}

impl fmt::Display for FunctionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        if a == 0.0 && b < 0.0 {
            return f64::NAN;
        }
        a.powi(b as i32)
    } else if b == 0.5 {
        if a >= 0.0 {
            a.sqrt()
        } else {
            f64::NAN
        }
    } else {
        a.powf(b)
    }
}

fn simplify(e: FunctionExpr) -> FunctionExpr {
    match e {
        E::Neg(a) => match simplify(*a) {
            E::Const(c) => E::Const(-c),
            E::Neg(inner) => *inner,
            a => E::Neg(bx(a)),
        },
        E::Add(a, b) => match (simplify(*a), simplify(*b)) {
            (E::Const(x), E::Const(y)) => E::Const(x + y),
            (E::Const(z), other) | (other, E::Const(z)) if z == 0.0 => other,
            (a, E::Neg(b)) => E::Sub(bx(a), b),
            (a, b) => E::Add(bx(a), bx(b)),
        },
        E::Sub(a, b) => match (simplify(*a), simplify(*b)) {
            (E::Const(x), E::Const(y)) => E::Const(x - y),
            (a, E::Const(z)) if z == 0.0 => a,
            (E::Const(z), b) if z == 0.0 => simplify(E::Neg(bx(b))),
            (a, b) => E::Sub(bx(a), bx(b)),
        },
        E::Mul(a, b) => match (simplify(*a), simplify(*b)) {
            (E::Const(x), E::Const(y)) => E::Const(x * y),
            (E::Const(z), _) | (_, E::Const(z)) if z == 0.0 => E::Const(0.0),
            (E::Const(o), other) | (other, E::Const(o)) if o == 1.0 => other,
            (E::Const(m), other) | (other, E::Const(m)) if m == -1.0 => simplify(E::Neg(bx(other))),
            (a, E::Const(c)) => E::Mul(bx(E::Const(c)), bx(a)),
            (a, b) => E::Mul(bx(a), bx(b)),
        },
        E::Div(a, b) => match (simplify(*a), simplify(*b)) {
            (E::Const(z), _) if z == 0.0 => E::Const(0.0),
            (a, E::Const(o)) if o == 1.0 => a,
            (a, b) => E::Div(bx(a), bx(b)),
        },
        E::Pow(a, b) => match (simplify(*a), simplify(*b)) {
            (_, E::Const(z)) if z == 0.0 => E::Const(1.0),
            (a, E::Const(o)) if o == 1.0 => a,
            (E::Const(x), E::Const(y)) if pow(x, y).is_finite() => E::Const(pow(x, y)),
            (a, b) => E::Pow(bx(a), bx(b)),
        },
        E::Call(f, a) => match simplify(*a) {
            E::Const(c) if f != Func::Log && f.apply(c).is_finite() => E::Const(f.apply(c)),
            E::Const(c) if f == Func::Log && c > 0.0 => E::Const(c.ln()),
            a => E::Call(f, bx(a)),
        },
        other => other,
    }
}

pub fn parse_expr(text: &str) -> Result<FunctionExpr, ParseError> {
    let mut p = Parser {
        src: text,
        bytes: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.pos == p.bytes.len() {
        return Err(p.error(p.pos, "empty expression"));
    }
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.error(p.pos, "unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, offset: usize, message: &str) -> ParseError {
        ParseError {
            offset,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<FunctionExpr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(b'+') {
                lhs = E::Add(bx(lhs), bx(self.product()?));
            } else if self.eat(b'-') {
                lhs = E::Sub(bx(lhs), bx(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<FunctionExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = E::Mul(bx(lhs), bx(self.unary()?));
            } else if self.eat(b'/') {
                lhs = E::Div(bx(lhs), bx(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<FunctionExpr, ParseError> {
        if self.eat(b'-') {
            Ok(E::Neg(bx(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<FunctionExpr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            Ok(E::Pow(bx(base), bx(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<FunctionExpr, ParseError> {
        let start = match self.peek() {
            None => return Err(self.error(self.pos, "unexpected end of input")),
            Some(_) => self.pos,
        };
        let c = self.bytes[start];
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let inner = self.sum()?;
            if !self.eat(b')') {
                return Err(self.error(self.pos, "expected `)`"));
            }
            return Ok(inner);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.bytes.len()
                && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = &self.src[start..self.pos];
            return match name {
                "t" => Ok(E::Var),
                "pi" => Ok(E::Const(std::f64::consts::PI)),
                "e" => Ok(E::Const(std::f64::consts::E)),
                _ => {
                    let func = Func::from_name(name)
                        .ok_or_else(|| self.error(start, &format!("unknown identifier `{}`", name)))?;
                    if !self.eat(b'(') {
                        return Err(self.error(self.pos, "expected `(` after function name"));
                    }
                    let arg = self.sum()?;
                    if !self.eat(b')') {
                        return Err(self.error(self.pos, "expected `)`"));
                    }
                    Ok(E::Call(func, bx(arg)))
                }
            };
        }
        Err(self.error(start, &format!("unexpected character `{}`", c as char)))
    }

    fn number(&mut self) -> Result<FunctionExpr, ParseError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            // Only an exponent if digits follow; otherwise `e` is left for the caller.
            let mut q = self.pos + 1;
            if q < b.len() && (b[q] == b'+' || b[q] == b'-') {
                q += 1;
            }
            if q < b.len() && b[q].is_ascii_digit() {
                while q < b.len() && b[q].is_ascii_digit() {
                    q += 1;
                }
                self.pos = q;
            }
        }
        let text = &self.src[start..self.pos];
        let v: f64 = text
            .parse()
            .map_err(|_| self.error(start, &format!("malformed number `{}`", text)))?;
        if !v.is_finite() {
            return Err(self.error(start, "numeric literal out of range"));
        }
        Ok(E::Const(v))
    }
}

/// A forcing or weight: an expression together with the point where its
/// support starts (values before `domain_start` are treated as zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFunction {
    #[serde(with = "expr_string")]
    pub expr: FunctionExpr,
    #[serde(default)]
    pub domain_start: f64,
    #[serde(default)]
    pub label: String,
}

impl ScalarFunction {
    pub fn new(expr: FunctionExpr, label: impl Into<String>) -> Self {
        ScalarFunction {
            expr,
            domain_start: 0.0,
            label: label.into(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Ok(ScalarFunction::new(parse_expr(text)?, text.trim()))
    }

    pub fn zero() -> Self {
        ScalarFunction::new(E::Const(0.0), "0")
    }

    /// Value at `t`, zero before `domain_start`, NaN outside the domain.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if t < self.domain_start {
            0.0
        } else {
            self.expr.value(t)
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < self.domain_start {
            Ok(0.0)
        } else {
            self.expr.eval(t)
        }
    }

    /// Absolute rounding noise expected when evaluating at `t`.
    pub fn noise(&self, t: f64) -> f64 {
        if t < self.domain_start {
            0.0
        } else {
            f64::EPSILON * self.expr.value_with_error(t).1
        }
    }

    pub fn derivative(&self) -> ScalarFunction {
        ScalarFunction {
            expr: self.expr.differentiate(),
            domain_start: self.domain_start,
            label: format!("d/dt[{}]", self.label),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.expr.as_const() == Some(0.0)
    }
}

mod expr_string {
    use super::{parse_expr, FunctionExpr};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &FunctionExpr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&e.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FunctionExpr, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text).map_err(serde::de::Error::custom)
    }
}
