//! System definitions: parsing, evaluation, and kernel code generation.
//!
//! A system is a set of first-order equations `dX_i/dt = F_i(X, t)` with
//! named parameters bound at parse time:
//!
//! ```text
//! param sigma = 10
//! param b = 8/3
//! param R = 28
//! diff(x,t) = sigma*(y - x)
//! diff(y,t) = -x*z + R*x - y
//! diff(z,t) = x*y - b*z
//! ```

mod codegen;
pub mod expr;
mod lexer;
mod parser;
pub mod predicate;

use std::fmt;

use indexmap::IndexMap;

pub use codegen::{emit_kernel_source, Dialect};
pub use expr::{BinOp, DomainError, Env, Expr, Func};
pub use parser::{parse_expr, parse_predicate, parse_system};
pub use predicate::{CmpOp, Predicate};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undeclared identifier `{name}` at {line}:{col}")]
    UndeclaredIdentifier { name: String, line: usize, col: usize },
    #[error("missing equation for state variable `{var}` referenced at {line}:{col}")]
    MissingEquation { var: String, line: usize, col: usize },
    #[error("duplicate equation for `{var}` at line {line}")]
    DuplicateEquation { var: String, line: usize },
    #[error("duplicate parameter `{name}` at line {line}")]
    DuplicateParameter { name: String, line: usize },
    #[error("`{name}` is declared both as a state variable and a parameter")]
    NameCollision { name: String },
    #[error("`{name}` is a reserved word ({line}:{col})")]
    ReservedName { name: String, line: usize, col: usize },
    #[error("exponent at {line}:{col} must be constant")]
    NonConstantExponent { line: usize, col: usize },
    #[error("parameter `{name}`: {source}")]
    ParameterValue { name: String, source: DomainError },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("system has no equations")]
    Empty,
    #[error("state vector has length {got}, system dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error in component {component}: {source}")]
    Domain { component: usize, source: DomainError },
    #[error("unsupported dialect `{0}`")]
    UnsupportedDialect(String),
    #[error("function `{function}` has no mapping in dialect `{dialect}`")]
    UnmappedFunction { dialect: String, function: String },
}

/// A parsed ODE system. Immutable once built; rebinding a parameter
/// produces a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    name: String,
    state_vars: Vec<String>,
    params: IndexMap<String, f64>,
    param_values: Vec<f64>,
    rhs: Vec<Expr>,
}

impl SystemDef {
    pub fn new(
        name: impl Into<String>,
        state_vars: Vec<String>,
        params: IndexMap<String, f64>,
        rhs: Vec<Expr>,
    ) -> Result<SystemDef, DslError> {
        if state_vars.is_empty() {
            return Err(DslError::Empty);
        }
        if rhs.len() != state_vars.len() {
            return Err(DslError::DimensionMismatch { expected: state_vars.len(), got: rhs.len() });
        }
        for (i, v) in state_vars.iter().enumerate() {
            if state_vars[..i].contains(v) {
                return Err(DslError::DuplicateEquation { var: v.clone(), line: 0 });
            }
            if params.contains_key(v) {
                return Err(DslError::NameCollision { name: v.clone() });
            }
        }
        let n = state_vars.len();
        for e in &rhs {
            let mut bad = None;
            e.walk(&mut |node| match node {
                Expr::Var(i) if *i >= n => bad = Some(DslError::DimensionMismatch { expected: n, got: i + 1 }),
                Expr::Param { name, slot } if params.get_index_of(name) != Some(*slot) => {
                    bad = Some(DslError::UnknownParameter(name.clone()))
                }
                _ => {}
            });
            if let Some(err) = bad {
                return Err(err);
            }
        }
        let param_values = params.values().copied().collect();
        Ok(SystemDef { name: name.into(), state_vars, params, param_values, rhs })
    }

    pub fn from_source(name: &str, source: &str) -> Result<SystemDef, DslError> {
        Ok(parse_system(source)?.with_name(name))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> SystemDef {
        self.name = name.into();
        self
    }

    /// Copy of the system with one parameter rebound.
    pub fn rebind(&self, param: &str, value: f64) -> Result<SystemDef, DslError> {
        let mut out = self.clone();
        let slot = out.params.get_index_of(param).ok_or_else(|| DslError::UnknownParameter(param.into()))?;
        out.params[slot] = value;
        out.param_values[slot] = value;
        Ok(out)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.state_vars.len()
    }

    pub fn state_vars(&self) -> &[String] {
        &self.state_vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.state_vars.iter().position(|v| v == name)
    }

    pub fn params(&self) -> &IndexMap<String, f64> {
        &self.params
    }

    pub fn param_values(&self) -> &[f64] {
        &self.param_values
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    /// `F(x, t)`, component-wise.
    pub fn eval_rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, DslError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_rhs_into(t, x, &mut out)?;
        Ok(out)
    }

    /// Allocation-free form of [`SystemDef::eval_rhs`] for the integrator.
    pub fn eval_rhs_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), DslError> {
        if x.len() != self.dim() {
            return Err(DslError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let env = Env { t: Some(t), x, params: &self.param_values };
        for (component, (e, slot)) in self.rhs.iter().zip(out.iter_mut()).enumerate() {
            *slot = e.eval(&env).map_err(|source| DslError::Domain { component, source })?;
        }
        Ok(())
    }

    pub fn uses_function(&self, f: Func) -> bool {
        let mut found = false;
        for e in &self.rhs {
            e.walk(&mut |node| found |= matches!(node, Expr::Call(g, _) if *g == f));
        }
        found
    }
}

/// Canonical source form; parses back to an identical system.
impl fmt::Display for SystemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in &self.params {
            writeln!(f, "param {name} = {}", expr::format_number(*value))?;
        }
        for (var, e) in self.state_vars.iter().zip(&self.rhs) {
            writeln!(f, "diff({var},t) = {}", expr::Pretty { expr: e, names: &self.state_vars })?;
        }
        Ok(())
    }
}
