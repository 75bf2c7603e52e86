//! Expression trees for right-hand sides and predicate operands.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest integer exponent that is expanded into repeated multiplication.
pub const MAX_UNROLLED_POWER: i64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Built-in functions. All of them take exactly one argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Exp, Func::Ln, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn arity(self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    /// Index into the system's state vector.
    Var(usize),
    /// Parameter reference; `slot` indexes the system's parameter table.
    Param { name: String, slot: usize },
    Time,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Out-of-domain evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("ln of non-positive value {0}")]
    LnNonPositive(f64),
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-integer power {exponent} of negative base {base}")]
    NegativeBase { base: f64, exponent: f64 },
    #[error("time is not bound in this context")]
    UnboundTime,
}

/// Values an expression may read while evaluating.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: Option<f64>,
    pub x: &'a [f64],
    pub params: &'a [f64],
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64, DomainError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => Ok(env.x[*i]),
            Expr::Param { slot, .. } => Ok(env.params[*slot]),
            Expr::Time => env.t.ok_or(DomainError::UnboundTime),
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Call(f, arg) => {
                let v = arg.eval(env)?;
                match f {
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Exp => Ok(v.exp()),
                    Func::Ln if v <= 0.0 => Err(DomainError::LnNonPositive(v)),
                    Func::Ln => Ok(v.ln()),
                    Func::Sqrt if v < 0.0 => Err(DomainError::SqrtNegative(v)),
                    Func::Sqrt => Ok(v.sqrt()),
                    Func::Abs => Ok(v.abs()),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                match op {
                    BinOp::Add => Ok(a + rhs.eval(env)?),
                    BinOp::Sub => Ok(a - rhs.eval(env)?),
                    BinOp::Mul => Ok(a * rhs.eval(env)?),
                    BinOp::Div => {
                        let b = rhs.eval(env)?;
                        if b == 0.0 {
                            Err(DomainError::DivisionByZero)
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => power(a, rhs.eval(env)?),
                }
            }
        }
    }

    /// True if the expression reads neither state nor time.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Param { .. } => true,
            Expr::Var(_) | Expr::Time => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Const(_) | Expr::Var(_) | Expr::Param { .. } => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_time(),
            Expr::Binary(_, a, b) => a.uses_time() || b.uses_time(),
        }
    }

    /// Visits every node, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Neg(e) | Expr::Call(_, e) => e.walk(f),
            Expr::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

/// Integer exponent of a constant power, if it is small enough to unroll.
pub fn unrolled_exponent(exponent: f64) -> Option<i64> {
    if exponent.fract() == 0.0 && exponent.abs() <= MAX_UNROLLED_POWER as f64 {
        Some(exponent as i64)
    } else {
        None
    }
}

/// `base^n` by left-to-right repeated multiplication; generated kernels
/// expand integer powers the same way so both agree bit for bit.
pub fn unrolled_power(base: f64, n: i64) -> f64 {
    let mut acc = if n == 0 { 1.0 } else { base };
    for _ in 1..n.unsigned_abs() {
        acc *= base;
    }
    if n < 0 {
        1.0 / acc
    } else {
        acc
    }
}

fn power(base: f64, exponent: f64) -> Result<f64, DomainError> {
    match unrolled_exponent(exponent) {
        Some(n) if n < 0 && base == 0.0 => Err(DomainError::DivisionByZero),
        Some(n) => Ok(unrolled_power(base, n)),
        None if base < 0.0 => Err(DomainError::NegativeBase { base, exponent }),
        None => Ok(base.powf(exponent)),
    }
}

/// Renders an expression with the minimum parentheses needed to re-parse
/// into the same tree. `names` maps state indices to identifiers.
pub struct Pretty<'a> {
    pub expr: &'a Expr,
    pub names: &'a [String],
}

impl fmt::Display for Pretty<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, self.names)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, names: &[String], min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        f.write_str("(")?;
        write_expr(f, e, names)?;
        f.write_str(")")
    } else {
        write_expr(f, e, names)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, names: &[String]) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "{}", format_number(*c)),
        Expr::Var(i) => f.write_str(&names[*i]),
        Expr::Param { name, .. } => f.write_str(name),
        Expr::Time => f.write_str("t"),
        Expr::Neg(inner) => {
            f.write_str("-")?;
            write_child(f, inner, names, 3)
        }
        Expr::Call(func, arg) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, arg, names)?;
            f.write_str(")")
        }
        Expr::Binary(BinOp::Pow, base, exp) => {
            write_child(f, base, names, 5)?;
            f.write_str("^")?;
            write_child(f, exp, names, 3)
        }
        Expr::Binary(op, lhs, rhs) => {
            let prec = e.precedence();
            write_child(f, lhs, names, prec)?;
            write!(f, " {} ", op.symbol())?;
            write_child(f, rhs, names, prec + 1)
        }
    }
}

/// Shortest decimal form that parses back to the same double.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}
