//! Scalar fields as expression trees.
//!
//! A field is a small expression over the invariant variables of a local
//! model: `y1..`, `z1..`, `zb1..` (conjugate fiber coordinates) for Kähler
//! potentials, `mu1..` for convex functions on the moment image. Fiber
//! variables `z` and `zb` are treated as independent complex variables
//! (Wirtinger calculus); evaluation at a point binds `zb` to `conj(z)`.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! func    := 'exp' | 'log'
//! ```
//!
//! Exponents must fold to constants.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A variable of a scalar field. Indices are zero-based; they print one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// `y_j = log|w_j|` on the torus factor.
    Y(usize),
    /// Fiber coordinate `z_l`.
    Z(usize),
    /// Conjugate fiber coordinate `conj(z_l)`.
    Zb(usize),
    /// Moment coordinate `mu_j`.
    Mu(usize),
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::Y(i) | Var::Z(i) | Var::Zb(i) | Var::Mu(i) => i,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::Z(i) => write!(f, "z{}", i + 1),
            Var::Zb(i) => write!(f, "zb{}", i + 1),
            Var::Mu(i) => write!(f, "mu{}", i + 1),
        }
    }
}

impl std::str::FromStr for Var {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::UnknownVariable(s.to_string()))?;
        let (prefix, digits) = s.split_at(split);
        let one_based: usize = digits
            .parse()
            .map_err(|_| Error::UnknownVariable(s.to_string()))?;
        if !(1..=9).contains(&one_based) || digits.len() != 1 {
            return Err(Error::UnknownVariable(s.to_string()));
        }
        let i = one_based - 1;
        match prefix {
            "y" => Ok(Var::Y(i)),
            "z" => Ok(Var::Z(i)),
            "zb" => Ok(Var::Zb(i)),
            "mu" => Ok(Var::Mu(i)),
            _ => Err(Error::UnknownVariable(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Sum(Box<Expr>, Box<Expr>),
    Product(Box<Expr>, Box<Expr>),
    /// Base raised to a constant (integer or real) exponent.
    Power(Box<Expr>, f64),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

fn is_integer(e: f64) -> bool {
    e.fract() == 0.0 && e.abs() <= i32::MAX as f64
}

// Smart constructors fold constants and drop neutral elements. Applying them
// to already simplified operands is a no-op, so `simplify` is idempotent.
impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn sum(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), None) => b,
            (None, Some(0.0)) => a,
            _ => Expr::Sum(Box::new(a), Box::new(b)),
        }
    }

    pub fn product(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
            (Some(1.0), None) => b,
            (None, Some(1.0)) => a,
            (None, Some(_)) => Expr::product(b, a),
            (Some(x), None) => match b {
                Expr::Product(inner_a, inner_b) if inner_a.as_const().is_some() => {
                    let c = inner_a.as_const().unwrap_or(1.0);
                    Expr::product(Expr::Const(x * c), *inner_b)
                }
                other => Expr::Product(Box::new(a), Box::new(other)),
            },
            (None, None) => Expr::Product(Box::new(a), Box::new(b)),
        }
    }

    pub fn power(base: Expr, exponent: f64) -> Expr {
        if exponent == 0.0 {
            return Expr::Const(1.0);
        }
        if exponent == 1.0 {
            return base;
        }
        match base {
            Expr::Const(c) if c > 0.0 || is_integer(exponent) => {
                Expr::Const(if is_integer(exponent) {
                    c.powi(exponent as i32)
                } else {
                    c.powf(exponent)
                })
            }
            Expr::Power(inner, e) if is_integer(e) && is_integer(exponent) => {
                Expr::power(*inner, e * exponent)
            }
            other => Expr::Power(Box::new(other), exponent),
        }
    }

    pub fn exp(arg: Expr) -> Expr {
        match arg {
            Expr::Const(c) => Expr::Const(c.exp()),
            other => Expr::Exp(Box::new(other)),
        }
    }

    pub fn log(arg: Expr) -> Expr {
        match arg {
            Expr::Const(c) if c > 0.0 => Expr::Const(c.ln()),
            other => Expr::Log(Box::new(other)),
        }
    }

    pub fn negated(a: Expr) -> Expr {
        Expr::product(Expr::Const(-1.0), a)
    }

    /// Rebuilds the tree bottom-up through the folding constructors.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Sum(a, b) => Expr::sum(a.simplify(), b.simplify()),
            Expr::Product(a, b) => Expr::product(a.simplify(), b.simplify()),
            Expr::Power(a, e) => Expr::power(a.simplify(), *e),
            Expr::Exp(a) => Expr::exp(a.simplify()),
            Expr::Log(a) => Expr::log(a.simplify()),
        }
    }

    /// Exact partial derivative, simplified.
    pub fn derivative(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Sum(a, b) => Expr::sum(a.derivative(var), b.derivative(var)),
            Expr::Product(a, b) => Expr::sum(
                Expr::product(a.derivative(var), b.simplify()),
                Expr::product(a.simplify(), b.derivative(var)),
            ),
            Expr::Power(a, e) => Expr::product(
                Expr::product(Expr::Const(*e), Expr::power(a.simplify(), e - 1.0)),
                a.derivative(var),
            ),
            Expr::Exp(a) => Expr::product(Expr::exp(a.simplify()), a.derivative(var)),
            Expr::Log(a) => Expr::product(a.derivative(var), Expr::power(a.simplify(), -1.0)),
        }
    }

    /// Replaces every occurrence of `var` by `with`.
    pub fn substitute(&self, var: Var, with: &Expr) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) if *v == var => with.clone(),
            Expr::Var(_) => self.clone(),
            Expr::Sum(a, b) => Expr::sum(a.substitute(var, with), b.substitute(var, with)),
            Expr::Product(a, b) => {
                Expr::product(a.substitute(var, with), b.substitute(var, with))
            }
            Expr::Power(a, e) => Expr::power(a.substitute(var, with), *e),
            Expr::Exp(a) => Expr::exp(a.substitute(var, with)),
            Expr::Log(a) => Expr::log(a.substitute(var, with)),
        }
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Sum(a, b) | Expr::Product(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Power(a, _) | Expr::Exp(a) | Expr::Log(a) => a.collect_vars(out),
        }
    }

    pub fn eval(&self, env: &Env) -> Complex64 {
        match self {
            Expr::Const(c) => Complex64::new(*c, 0.0),
            Expr::Var(v) => env.get(*v),
            Expr::Sum(a, b) => a.eval(env) + b.eval(env),
            Expr::Product(a, b) => a.eval(env) * b.eval(env),
            Expr::Power(a, e) => {
                let base = a.eval(env);
                if is_integer(*e) {
                    base.powi(*e as i32)
                } else if base.im == 0.0 && base.re > 0.0 {
                    Complex64::new(base.re.powf(*e), 0.0)
                } else {
                    base.powf(*e)
                }
            }
            Expr::Exp(a) => a.eval(env).exp(),
            Expr::Log(a) => {
                let v = a.eval(env);
                if v.im == 0.0 && v.re > 0.0 {
                    Complex64::new(v.re.ln(), 0.0)
                } else {
                    v.ln()
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Sum(..) => 1,
            Expr::Product(..) => 2,
            Expr::Const(c) if *c < 0.0 => 2,
            Expr::Power(..) => 3,
            _ => 4,
        }
    }
}

/// Assignment of values to variables. `zb` is bound independently of `z` so
/// that Wirtinger derivatives can be probed one variable at a time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env {
    pub y: Vec<Complex64>,
    pub z: Vec<Complex64>,
    pub zb: Vec<Complex64>,
    pub mu: Vec<Complex64>,
}

impl Env {
    pub fn from_moment(mu: &[f64]) -> Env {
        Env {
            mu: mu.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
            ..Env::default()
        }
    }

    /// Panics when the variable index is outside the bound vectors; fields are
    /// checked against their model before evaluation.
    pub fn get(&self, v: Var) -> Complex64 {
        match v {
            Var::Y(i) => self.y[i],
            Var::Z(i) => self.z[i],
            Var::Zb(i) => self.zb[i],
            Var::Mu(i) => self.mu[i],
        }
    }

    pub fn slot_mut(&mut self, v: Var) -> &mut Complex64 {
        match v {
            Var::Y(i) => &mut self.y[i],
            Var::Z(i) => &mut self.z[i],
            Var::Zb(i) => &mut self.zb[i],
            Var::Mu(i) => &mut self.mu[i],
        }
    }

    pub fn with(&self, v: Var, delta: f64) -> Env {
        let mut out = self.clone();
        *out.slot_mut(v) += delta;
        out
    }
}

fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.is_finite() && is_integer(c) && c.abs() < 1e15 {
        write!(f, "{}", c as i64)
    } else {
        write!(f, "{c:?}")
    }
}

impl Expr {
    fn fmt_child(&self, child: &Expr, strict: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let needs = if strict {
            child.precedence() <= self.precedence()
        } else {
            child.precedence() < self.precedence()
        };
        if needs {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => fmt_const(*c, f),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Sum(a, b) => {
                self.fmt_child(a, false, f)?;
                match b.as_ref() {
                    Expr::Product(c, rest) if c.as_const() == Some(-1.0) => {
                        write!(f, " - ")?;
                        if rest.precedence() <= 1 {
                            write!(f, "({rest})")
                        } else {
                            write!(f, "{rest}")
                        }
                    }
                    _ => {
                        write!(f, " + ")?;
                        self.fmt_child(b, true, f)
                    }
                }
            }
            Expr::Product(a, b) => {
                if a.as_const() == Some(-1.0) {
                    write!(f, "-")?;
                    return self.fmt_child(b, true, f);
                }
                self.fmt_child(a, false, f)?;
                match b.as_ref() {
                    Expr::Power(base, e) if *e == -1.0 => {
                        write!(f, "/")?;
                        self.fmt_child(base, true, f)
                    }
                    _ => {
                        write!(f, "*")?;
                        self.fmt_child(b, true, f)
                    }
                }
            }
            Expr::Power(a, e) => {
                self.fmt_child(a, true, f)?;
                write!(f, "^")?;
                if *e < 0.0 {
                    write!(f, "(")?;
                    fmt_const(*e, f)?;
                    write!(f, ")")
                } else {
                    fmt_const(*e, f)
                }
            }
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                let rhs = self.term()?;
                acc = Expr::Sum(Box::new(acc), Box::new(rhs));
            } else if self.eat('-') {
                let rhs = self.term()?;
                acc = Expr::Sum(Box::new(acc), Box::new(negate_raw(rhs)));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                let rhs = self.unary()?;
                acc = Expr::Product(Box::new(acc), Box::new(rhs));
            } else if self.eat('/') {
                let rhs = self.unary()?;
                acc = Expr::Product(Box::new(acc), Box::new(Expr::Power(Box::new(rhs), -1.0)));
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            let inner = self.unary()?;
            return Ok(negate_raw(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat('^') {
            let start = self.pos;
            let exponent = self.unary()?;
            if !exponent.variables().is_empty() {
                self.pos = start;
                return self.error("exponent must be a constant");
            }
            let value = exponent.eval(&Env::default());
            if value.im != 0.0 || !value.re.is_finite() {
                self.pos = start;
                return self.error("exponent must be a finite real constant");
            }
            return Ok(Expr::Power(Box::new(base), value.re));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return self.error("expected `)`");
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while let Some(c) = self.src[self.pos..].chars().next() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let ident = &self.src[start..self.pos];
                match ident {
                    "exp" | "log" => {
                        if !self.eat('(') {
                            return self.error(format!("expected `(` after `{ident}`"));
                        }
                        let arg = self.expr()?;
                        if !self.eat(')') {
                            return self.error("expected `)`");
                        }
                        Ok(if ident == "exp" {
                            Expr::Exp(Box::new(arg))
                        } else {
                            Expr::Log(Box::new(arg))
                        })
                    }
                    _ => match ident.parse::<Var>() {
                        Ok(v) => Ok(Expr::Var(v)),
                        Err(_) => {
                            self.pos = start;
                            self.error(format!("unknown identifier `{ident}`"))
                        }
                    },
                }
            }
            Some(c) => self.error(format!("unexpected character `{c}`")),
            None => self.error("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.')
        {
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
        match self.src[start..self.pos].parse::<f64>() {
            Ok(v) => Ok(Expr::Const(v)),
            Err(_) => {
                self.pos = start;
                self.error("malformed number")
            }
        }
    }
}

fn negate_raw(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::Product(Box::new(Expr::Const(-1.0)), Box::new(other)),
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Expr> {
        let mut parser = Parser { src: s, pos: 0 };
        let e = parser.expr()?;
        if parser.peek().is_some() {
            return parser.error("trailing input");
        }
        Ok(e)
    }
}

/// Which variable family a field lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Kähler potential over `y`, `z`, `zb`.
    Potential,
    /// Function on the moment image over `mu`.
    Convex,
}

impl FieldKind {
    pub fn admits(self, v: Var) -> bool {
        match self {
            FieldKind::Potential => !matches!(v, Var::Mu(_)),
            FieldKind::Convex => matches!(v, Var::Mu(_)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    expr: Expr,
    kind: FieldKind,
}

impl ScalarField {
    pub fn new(expr: Expr, kind: FieldKind) -> Result<Self> {
        if let Some(bad) = expr.variables().into_iter().find(|v| !kind.admits(*v)) {
            return Err(Error::UnknownVariable(bad.to_string()));
        }
        Ok(ScalarField { expr, kind })
    }

    pub fn parse(src: &str, kind: FieldKind) -> Result<Self> {
        ScalarField::new(src.parse()?, kind)
    }

    pub fn potential(src: &str) -> Result<Self> {
        ScalarField::parse(src, FieldKind::Potential)
    }

    pub fn convex(src: &str) -> Result<Self> {
        ScalarField::parse(src, FieldKind::Convex)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn eval(&self, env: &Env) -> Complex64 {
        self.expr.eval(env)
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        self.expr.variables()
    }

    /// Errors if any variable index lies outside the given family sizes.
    pub fn check_bounds(&self, n_y: usize, n_z: usize, n_mu: usize) -> Result<()> {
        for v in self.variables() {
            let limit = match v {
                Var::Y(_) => n_y,
                Var::Z(_) | Var::Zb(_) => n_z,
                Var::Mu(_) => n_mu,
            };
            if v.index() >= limit {
                return Err(Error::UnknownVariable(v.to_string()));
            }
        }
        Ok(())
    }

    pub(crate) fn from_expr_unchecked(expr: Expr, kind: FieldKind) -> Self {
        ScalarField { expr, kind }
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

impl Serialize for ScalarField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Deserializes from an expression string; the kind is inferred from the
/// variables (constant fields default to `Potential`).
impl<'de> Deserialize<'de> for ScalarField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        let expr: Expr = src.parse().map_err(serde::de::Error::custom)?;
        let kind = if expr.variables().iter().any(|v| matches!(v, Var::Mu(_))) {
            FieldKind::Convex
        } else {
            FieldKind::Potential
        };
        ScalarField::new(expr, kind).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_y(y: f64) -> Env {
        Env {
            y: vec![Complex64::new(y, 0.0)],
            ..Env::default()
        }
    }

    #[test]
    fn parses_and_prints() {
        let e: Expr = "y1^2 + 2*z1*zb1 - exp(y1)/3".parse().unwrap();
        assert_eq!(e.to_string(), "y1^2 + 2*z1*zb1 - exp(y1)/3");
        let e: Expr = "mu1^2/2".parse().unwrap();
        assert_eq!(e.to_string(), "mu1^2/2");
        let e: Expr = "-(y1 + 1)^(-1)".parse().unwrap();
        assert_eq!(e.to_string(), "-(y1 + 1)^(-1)");
        let e: Expr = "y1^(1/2)".parse().unwrap();
        assert_eq!(e, Expr::Power(Box::new(Expr::Var(Var::Y(0))), 0.5));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!("y1 +".parse::<Expr>(), Err(Error::Parse { .. })));
        assert!(matches!("w1".parse::<Expr>(), Err(Error::Parse { .. })));
        assert!(matches!("y1^y1".parse::<Expr>(), Err(Error::Parse { .. })));
        assert!(matches!("sin(y1)".parse::<Expr>(), Err(Error::Parse { .. })));
        assert!(matches!("(y1".parse::<Expr>(), Err(Error::Parse { .. })));
        assert!(matches!("y10".parse::<Expr>(), Err(Error::Parse { .. })));
    }

    #[test]
    fn field_kind_guards_variables() {
        assert!(ScalarField::potential("y1 + z1*zb1").is_ok());
        assert!(matches!(
            ScalarField::potential("mu1"),
            Err(Error::UnknownVariable(_))
        ));
        assert!(matches!(
            ScalarField::convex("y1"),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn derivative_of_square() {
        let e: Expr = "y1^2".parse().unwrap();
        assert_eq!(e.derivative(Var::Y(0)).to_string(), "2*y1");
        let e: Expr = "mu1^2/2".parse().unwrap();
        assert_eq!(e.derivative(Var::Mu(0)).to_string(), "mu1");
        let e: Expr = "exp(y1)".parse().unwrap();
        let d2 = e.derivative(Var::Y(0)).derivative(Var::Y(0));
        assert_eq!(d2.to_string(), "exp(y1)");
    }

    #[test]
    fn simplify_is_idempotent_on_derivatives() {
        let e: Expr = "log(y1^2 + 1)*exp(2*y1) + y1^3/y1".parse().unwrap();
        let d = e.derivative(Var::Y(0));
        assert_eq!(d.simplify(), d);
        assert_eq!(d.simplify().simplify(), d.simplify());
    }

    #[test]
    fn eval_matches_closed_form() {
        let e: Expr = "y1^3 + log(y1) - exp(-y1)".parse().unwrap();
        let v = e.eval(&env_y(2.0)).re;
        assert!((v - (8.0 + 2f64.ln() - (-2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn wirtinger_derivatives_treat_conjugates_independently() {
        let e: Expr = "z1*zb1".parse().unwrap();
        assert_eq!(e.derivative(Var::Z(0)).to_string(), "zb1");
        assert_eq!(e.derivative(Var::Zb(0)).to_string(), "z1");
    }

    #[test]
    fn substitution() {
        let e: Expr = "mu1^2/2 + mu1".parse().unwrap();
        let neg = Expr::negated(Expr::var(Var::Mu(0)));
        let s = e.substitute(Var::Mu(0), &neg);
        let env = Env::from_moment(&[3.0]);
        assert!((s.eval(&env).re - (4.5 - 3.0)).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip() {
        let f = ScalarField::convex("mu1^2/2 + mu1*mu2/4").unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let back: ScalarField = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn leaf() -> impl Strategy<Value = Expr> {
            prop_oneof![
                (-4i32..=4).prop_map(|n| Expr::constant(n as f64)),
                (-40i32..=40).prop_map(|n| Expr::constant(n as f64 / 8.0)),
                (0usize..2).prop_map(|i| Expr::var(Var::Y(i))),
                (0usize..2).prop_map(|i| Expr::var(Var::Z(i))),
                (0usize..2).prop_map(|i| Expr::var(Var::Zb(i))),
            ]
        }

        fn expr() -> impl Strategy<Value = Expr> {
            leaf().prop_recursive(4, 24, 2, |inner| {
                prop_oneof![
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sum(a, b)),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::product(a, b)),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sum(a, Expr::negated(b))),
                    (inner.clone(), 2u8..4).prop_map(|(a, n)| Expr::power(a, n as f64)),
                    inner.clone().prop_map(|a| Expr::exp(Expr::product(Expr::constant(0.25), a))),
                ]
            })
        }

        fn env(v: [f64; 6]) -> Env {
            let c = |re, im| Complex64::new(re, im);
            Env {
                y: vec![c(v[0], 0.0), c(v[1], 0.0)],
                z: vec![c(v[2], v[3]), c(v[4], v[5])],
                zb: vec![c(v[2], -v[3]), c(v[4], -v[5])],
                mu: vec![],
            }
        }

        proptest! {
            #[test]
            fn print_parse_is_stable(e in expr()) {
                let printed = e.to_string();
                let parsed: Expr = printed.parse().unwrap();
                prop_assert_eq!(parsed.to_string(), printed);
            }

            #[test]
            fn printing_preserves_value(e in expr(), v in prop::array::uniform6(-1.0f64..1.0)) {
                let parsed: Expr = e.to_string().parse().unwrap();
                let env = env(v);
                let (a, b) = (e.eval(&env), parsed.eval(&env));
                prop_assume!(a.is_finite());
                prop_assert!((a - b).norm() <= 1e-9 * a.norm().max(1.0), "{} vs {} for {}", a, b, e);
            }

            #[test]
            fn simplify_is_idempotent(e in expr()) {
                let once = e.simplify();
                prop_assert_eq!(once.simplify(), once);
            }
        }
    }
}
