use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::{DomainError, Env, Expr, Pretty};
use super::SystemDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Two-class orbit coloring rule, evaluated on a final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Cmp(CmpOp, Expr, Expr),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    /// Evaluates with time unbound; predicates that read `t` fail here.
    pub fn eval(&self, sys: &SystemDef, x: &[f64]) -> Result<bool, DomainError> {
        self.eval_inner(&Env { t: None, x, params: sys.param_values() })
    }

    /// Evaluates with time bound to `t`, as when classifying a final state.
    pub fn eval_at(&self, sys: &SystemDef, t: f64, x: &[f64]) -> Result<bool, DomainError> {
        self.eval_inner(&Env { t: Some(t), x, params: sys.param_values() })
    }

    fn eval_inner(&self, env: &Env<'_>) -> Result<bool, DomainError> {
        match self {
            Predicate::Cmp(op, a, b) => Ok(op.apply(a.eval(env)?, b.eval(env)?)),
            // Both sides are evaluated so domain errors surface regardless of order.
            Predicate::And(a, b) => {
                let (l, r) = (a.eval_inner(env)?, b.eval_inner(env)?);
                Ok(l && r)
            }
            Predicate::Or(a, b) => {
                let (l, r) = (a.eval_inner(env)?, b.eval_inner(env)?);
                Ok(l || r)
            }
            Predicate::Not(p) => Ok(!p.eval_inner(env)?),
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Predicate::Cmp(_, a, b) => a.uses_time() || b.uses_time(),
            Predicate::And(a, b) | Predicate::Or(a, b) => a.uses_time() || b.uses_time(),
            Predicate::Not(p) => p.uses_time(),
        }
    }

    pub fn display<'a>(&'a self, sys: &'a SystemDef) -> impl fmt::Display + 'a {
        PrettyPredicate { pred: self, names: sys.state_vars() }
    }
}

struct PrettyPredicate<'a> {
    pred: &'a Predicate,
    names: &'a [String],
}

impl PrettyPredicate<'_> {
    fn child<'b>(&'b self, pred: &'b Predicate) -> PrettyPredicate<'b> {
        PrettyPredicate { pred, names: self.names }
    }
}

impl fmt::Display for PrettyPredicate<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pred {
            Predicate::Cmp(op, a, b) => write!(
                f,
                "{} {} {}",
                Pretty { expr: a, names: self.names },
                op.symbol(),
                Pretty { expr: b, names: self.names }
            ),
            Predicate::And(a, b) => write!(f, "({} and {})", self.child(a), self.child(b)),
            Predicate::Or(a, b) => write!(f, "({} or {})", self.child(a), self.child(b)),
            Predicate::Not(p) => write!(f, "not {}", self.child(p)),
        }
    }
}
