//! Recursive-descent parser for system sources and predicates.
//!
//! ```text
//! system     ::= (param_decl | equation) ([";" | ","] (param_decl | equation))*
//! param_decl ::= "param" ident "=" const_expr
//! equation   ::= "diff(" ident ["(t)"] "," "t" ")" "=" expr
//! expr       ::= term (("+" | "-") term)*
//! term       ::= unary (("*" | "/") unary)*
//! unary      ::= "-" unary | power
//! power      ::= primary ["^" unary]          (right-associative)
//! primary    ::= number | "t" | ident ["(t)"] | func "(" expr ")" | "(" expr ")"
//! predicate  ::= conj ("or" conj)*
//! conj       ::= neg ("and" neg)*
//! neg        ::= "not" neg | expr cmp expr | "(" predicate ")"
//! cmp        ::= "<" | ">" | "<=" | ">="
//! ```

use indexmap::IndexMap;

use super::expr::{BinOp, Env, Expr, Func};
use super::lexer::{tokenize, Tok, Token};
use super::predicate::{CmpOp, Predicate};
use super::{DslError, SystemDef};

const RESERVED: &[&str] = &["t", "diff", "param", "and", "or", "not"];

pub(crate) fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name) || Func::from_name(name).is_some()
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    /// Right-hand side: unknown bare identifiers are state variables without an equation.
    Equation,
    /// Parameter values: only numbers and already-declared parameters.
    Constant,
    Predicate,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    state_vars: Vec<String>,
    params: IndexMap<String, f64>,
    /// Parameters with slot below this are visible to constant expressions.
    declared_params: usize,
    mode: Mode,
}

impl Parser {
    fn for_system(toks: Vec<Token>, sys: &SystemDef) -> Parser {
        Parser {
            toks,
            pos: 0,
            state_vars: sys.state_vars().to_vec(),
            params: sys.params().clone(),
            declared_params: sys.params().len(),
            mode: Mode::Predicate,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, DslError> {
        let (line, col) = self.here();
        Err(DslError::Syntax { line, col, msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, DslError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            self.syntax(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, usize, usize), DslError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let t = self.bump();
                Ok((name, t.line, t.col))
            }
            other => self.syntax(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    /// Consumes `(t)` if it follows.
    fn time_suffix(&mut self) -> bool {
        if *self.peek() == Tok::LParen
            && matches!(self.peek_at(1), Tok::Ident(s) if s == "t")
            && *self.peek_at(2) == Tok::RParen
        {
            self.pos += 3;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let (line, col) = self.here();
        let exponent = self.unary()?;
        if !exponent.is_constant() {
            return Err(DslError::NonConstantExponent { line, col });
        }
        Ok(Expr::binary(BinOp::Pow, base, exponent))
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let (line, col) = self.here();
                self.bump();
                self.identifier(name, line, col)
            }
            other => self.syntax(format!("expected expression, found {}", describe(&other))),
        }
    }

    fn identifier(&mut self, name: String, line: usize, col: usize) -> Result<Expr, DslError> {
        if let Some(func) = Func::from_name(&name) {
            self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
            let arg = self.expr()?;
            if *self.peek() == Tok::Comma {
                return self.syntax(format!("`{name}` takes {} argument", func.arity()));
            }
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if RESERVED.contains(&name.as_str()) && name != "t" {
            return Err(DslError::Syntax { line, col, msg: format!("unexpected keyword `{name}`") });
        }
        if name == "t" {
            if self.mode == Mode::Constant {
                return Err(DslError::UndeclaredIdentifier { name, line, col });
            }
            return Ok(Expr::Time);
        }
        let suffixed = self.time_suffix();
        if self.mode != Mode::Constant {
            if let Some(i) = self.state_vars.iter().position(|v| *v == name) {
                return Ok(Expr::Var(i));
            }
        }
        if !suffixed {
            if let Some(slot) = self.params.get_index_of(&name) {
                if self.mode != Mode::Constant || slot < self.declared_params {
                    return Ok(Expr::Param { name, slot });
                }
            }
        }
        match self.mode {
            Mode::Equation => Err(DslError::MissingEquation { var: name, line, col }),
            _ => Err(DslError::UndeclaredIdentifier { name, line, col }),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, DslError> {
        let mut lhs = self.conjunction()?;
        while self.keyword("or") {
            self.bump();
            let rhs = self.conjunction()?;
            lhs = Predicate::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Predicate, DslError> {
        let mut lhs = self.negation()?;
        while self.keyword("and") {
            self.bump();
            let rhs = self.negation()?;
            lhs = Predicate::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn negation(&mut self) -> Result<Predicate, DslError> {
        if self.keyword("not") {
            self.bump();
            return Ok(Predicate::Not(Box::new(self.negation()?)));
        }
        let start = self.pos;
        match self.comparison() {
            Ok(p) => Ok(p),
            Err(first) if self.toks[start].tok == Tok::LParen => {
                let reached = self.pos;
                self.pos = start + 1;
                let inner = self.predicate().and_then(|p| {
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(p)
                });
                match inner {
                    Ok(p) => Ok(p),
                    // Report whichever reading got further into the input.
                    Err(second) if self.pos >= reached => Err(second),
                    Err(_) => Err(first),
                }
            }
            Err(e) => Err(e),
        }
    }

    fn comparison(&mut self) -> Result<Predicate, DslError> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Gt => CmpOp::Gt,
            Tok::Le => CmpOp::Le,
            Tok::Ge => CmpOp::Ge,
            other => return self.syntax(format!("expected comparison operator, found {}", describe(other))),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Predicate::Cmp(op, lhs, rhs))
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number `{v}`"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Semi => "`;`".into(),
        Tok::Eq => "`=`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::Lt => "`<`".into(),
        Tok::Gt => "`>`".into(),
        Tok::Le => "`<=`".into(),
        Tok::Ge => "`>=`".into(),
    }
}

/// Parses a system source. The system is named `system` until renamed.
pub fn parse_system(source: &str) -> Result<SystemDef, DslError> {
    let toks = tokenize(source)?;
    if toks[0].tok == Tok::Eof {
        return Err(DslError::Empty);
    }

    // Names are collected up front so equations may reference variables and
    // parameters declared further down.
    let mut state_vars: Vec<String> = Vec::new();
    let mut params: IndexMap<String, f64> = IndexMap::new();
    for w in toks.windows(3) {
        match (&w[0].tok, &w[1].tok, &w[2].tok) {
            (Tok::Ident(kw), Tok::LParen, Tok::Ident(v)) if kw == "diff" => {
                if !state_vars.contains(v) {
                    state_vars.push(v.clone());
                }
            }
            (Tok::Ident(kw), Tok::Ident(n), _) if kw == "param" => {
                params.entry(n.clone()).or_insert(f64::NAN);
            }
            _ => {}
        }
    }

    let mut p = Parser { toks, pos: 0, state_vars, params, declared_params: 0, mode: Mode::Constant };
    let mut rhs: Vec<Option<Expr>> = vec![None; p.state_vars.len()];
    loop {
        if p.keyword("param") {
            p.bump();
            let (name, line, col) = p.expect_ident()?;
            if is_reserved(&name) {
                return Err(DslError::ReservedName { name, line, col });
            }
            p.expect(Tok::Eq, "`=`")?;
            let slot = p.params.get_index_of(&name).expect("collected in pre-scan");
            if slot < p.declared_params {
                return Err(DslError::DuplicateParameter { name, line });
            }
            let (vline, vcol) = p.here();
            p.mode = Mode::Constant;
            let e = p.expr()?;
            let values: Vec<f64> = p.params.values().copied().collect();
            let value = e
                .eval(&Env { t: None, x: &[], params: &values })
                .map_err(|source| DslError::ParameterValue { name: name.clone(), source })?;
            if !value.is_finite() {
                return Err(DslError::Syntax {
                    line: vline,
                    col: vcol,
                    msg: format!("parameter `{name}` is not finite"),
                });
            }
            p.params[slot] = value;
            p.declared_params = slot + 1;
        } else if p.keyword("diff") {
            let line = p.here().0;
            p.bump();
            p.expect(Tok::LParen, "`(` after `diff`")?;
            let (var, vline, vcol) = p.expect_ident()?;
            if is_reserved(&var) {
                return Err(DslError::ReservedName { name: var, line: vline, col: vcol });
            }
            p.time_suffix();
            p.expect(Tok::Comma, "`,`")?;
            match p.peek() {
                Tok::Ident(s) if s == "t" => {
                    p.bump();
                }
                other => return p.syntax(format!("expected `t`, found {}", describe(other))),
            }
            p.expect(Tok::RParen, "`)`")?;
            p.expect(Tok::Eq, "`=`")?;
            let i = p.state_vars.iter().position(|v| *v == var).expect("collected in pre-scan");
            if rhs[i].is_some() {
                return Err(DslError::DuplicateEquation { var, line });
            }
            p.mode = Mode::Equation;
            rhs[i] = Some(p.expr()?);
        } else {
            return p.syntax(format!("expected `param` or `diff`, found {}", describe(p.peek())));
        }
        let mut separated = false;
        while matches!(p.peek(), Tok::Semi | Tok::Comma) {
            p.bump();
            separated = true;
        }
        if *p.peek() == Tok::Eof {
            break;
        }
        if !separated && !p.keyword("param") && !p.keyword("diff") {
            return p.syntax(format!("unexpected {}", describe(p.peek())));
        }
    }

    if let Some(name) = p.state_vars.iter().find(|v| p.params.contains_key(*v)) {
        return Err(DslError::NameCollision { name: name.clone() });
    }
    let rhs: Vec<Expr> = rhs.into_iter().map(|e| e.expect("every collected variable has an equation")).collect();
    SystemDef::new("system", p.state_vars, p.params, rhs)
}

/// Parses a boolean classification predicate against a system's names.
pub fn parse_predicate(source: &str, sys: &SystemDef) -> Result<Predicate, DslError> {
    let toks = tokenize(source)?;
    let mut p = Parser::for_system(toks, sys);
    let pred = p.predicate()?;
    if *p.peek() != Tok::Eof {
        return p.syntax(format!("unexpected {} after predicate", describe(p.peek())));
    }
    Ok(pred)
}

/// Parses a standalone expression over a system's names.
pub fn parse_expr(source: &str, sys: &SystemDef) -> Result<Expr, DslError> {
    let toks = tokenize(source)?;
    let mut p = Parser::for_system(toks, sys);
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.syntax(format!("unexpected {}", describe(p.peek())));
    }
    Ok(e)
}
