//! C kernel emission.
//!
//! Every dialect emits the entry point
//! `void derivs(double t, const double *x, double *dxdt)`. Expressions are
//! fully parenthesized so the compiled kernel performs the same operations
//! in the same order as [`SystemDef::eval_rhs`].

use std::collections::BTreeSet;
use std::fmt::Write;
use std::str::FromStr;

use super::expr::{format_number, unrolled_exponent, BinOp, Env, Expr, Func};
use super::{DslError, SystemDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    /// Hosted C99 with `<math.h>`.
    C99,
    /// C99 without libm: arithmetic, `abs` and integer powers only.
    C99NoLibm,
}

impl Dialect {
    pub fn name(self) -> &'static str {
        match self {
            Dialect::C99 => "c99",
            Dialect::C99NoLibm => "c99-nolibm",
        }
    }

    fn function(self, f: Func) -> Option<&'static str> {
        match (self, f) {
            (Dialect::C99, Func::Sin) => Some("sin"),
            (Dialect::C99, Func::Cos) => Some("cos"),
            (Dialect::C99, Func::Exp) => Some("exp"),
            (Dialect::C99, Func::Ln) => Some("log"),
            (Dialect::C99, Func::Sqrt) => Some("sqrt"),
            (Dialect::C99, Func::Abs) => Some("fabs"),
            (Dialect::C99NoLibm, Func::Abs) => Some("cs_abs"),
            (Dialect::C99NoLibm, _) => None,
        }
    }

    fn has_pow(self) -> bool {
        self == Dialect::C99
    }
}

impl FromStr for Dialect {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Dialect, DslError> {
        match s {
            "c99" => Ok(Dialect::C99),
            "c99-nolibm" => Ok(Dialect::C99NoLibm),
            other => Err(DslError::UnsupportedDialect(other.to_string())),
        }
    }
}

struct Emitter<'a> {
    sys: &'a SystemDef,
    dialect: Dialect,
    powers: BTreeSet<u64>,
}

impl Emitter<'_> {
    fn unmapped(&self, function: &str) -> DslError {
        DslError::UnmappedFunction { dialect: self.dialect.name().into(), function: function.into() }
    }

    fn expr(&mut self, e: &Expr, out: &mut String) -> Result<(), DslError> {
        match e {
            Expr::Const(c) => out.push_str(&c_literal(*c)),
            Expr::Var(i) => write!(out, "x[{i}]").unwrap(),
            Expr::Param { name, .. } => write!(out, "p_{name}").unwrap(),
            Expr::Time => out.push('t'),
            Expr::Neg(inner) => {
                out.push_str("(-");
                self.expr(inner, out)?;
                out.push(')');
            }
            Expr::Call(f, arg) => {
                let name = self.dialect.function(*f).ok_or_else(|| self.unmapped(f.name()))?;
                write!(out, "{name}(").unwrap();
                self.expr(arg, out)?;
                out.push(')');
            }
            Expr::Binary(BinOp::Pow, base, exponent) => {
                let value = exponent
                    .eval(&Env { t: None, x: &[], params: self.sys.param_values() })
                    .expect("exponents are constant");
                match unrolled_exponent(value) {
                    Some(0) => out.push_str("1.0"),
                    Some(n) => {
                        let k = n.unsigned_abs();
                        if k > 1 {
                            self.powers.insert(k);
                        }
                        if n < 0 {
                            out.push_str("(1.0 / ");
                        }
                        if k > 1 {
                            write!(out, "cs_pow{k}(").unwrap();
                            self.expr(base, out)?;
                            out.push(')');
                        } else {
                            out.push('(');
                            self.expr(base, out)?;
                            out.push(')');
                        }
                        if n < 0 {
                            out.push(')');
                        }
                    }
                    None if self.dialect.has_pow() => {
                        out.push_str("pow(");
                        self.expr(base, out)?;
                        write!(out, ", {})", c_literal(value)).unwrap();
                    }
                    None => return Err(self.unmapped("pow")),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                out.push('(');
                self.expr(lhs, out)?;
                write!(out, " {} ", op.symbol()).unwrap();
                self.expr(rhs, out)?;
                out.push(')');
            }
        }
        Ok(())
    }
}

fn c_literal(v: f64) -> String {
    let s = format_number(v);
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Emits kernel source for `sys` in the named dialect.
pub fn emit_kernel_source(sys: &SystemDef, dialect: &str) -> Result<String, DslError> {
    let dialect: Dialect = dialect.parse()?;
    let mut em = Emitter { sys, dialect, powers: BTreeSet::new() };
    let mut body = String::new();
    for (i, e) in sys.rhs().iter().enumerate() {
        let mut line = String::new();
        em.expr(e, &mut line)?;
        writeln!(body, "    dxdt[{i}] = {line};").unwrap();
    }

    let mut src = String::new();
    writeln!(src, "/* derivs kernel for system `{}` ({}). Generated file. */", sys.name(), dialect.name()).unwrap();
    for (var, i) in sys.state_vars().iter().zip(0..) {
        writeln!(src, "/*   x[{i}] = {var} */").unwrap();
    }
    if dialect == Dialect::C99 {
        src.push_str("#include <math.h>\n");
    }
    src.push('\n');
    for (name, value) in sys.params() {
        writeln!(src, "static const double p_{name} = {};", c_literal(*value)).unwrap();
    }
    if !sys.params().is_empty() {
        src.push('\n');
    }
    if dialect == Dialect::C99NoLibm && sys.uses_function(Func::Abs) {
        src.push_str("static double cs_abs(double v) { return v < 0.0 ? -v : v; }\n\n");
    }
    for k in &em.powers {
        let product = vec!["v"; *k as usize].join(" * ");
        writeln!(src, "static double cs_pow{k}(double v) {{ return {product}; }}").unwrap();
    }
    if !em.powers.is_empty() {
        src.push('\n');
    }
    src.push_str("void derivs(double t, const double *x, double *dxdt)\n{\n    (void)t;\n    (void)x;\n");
    src.push_str(&body);
    src.push_str("}\n");
    Ok(src)
}
