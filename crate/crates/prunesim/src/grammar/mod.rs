//! Parametric L-system grammars: parsing, stochastic rewriting, and turtle
//! interpretation of symbol strings into 3D branch skeletons.
//!
//! Grammar files (`.lsys`) are a line-oriented format documented in
//! `docs/grammar.md`. Angles in grammar files are degrees; everything
//! internal is radians and meters.

mod parse;
mod rewrite;
mod turtle;

pub use parse::parse_grammar;
pub use rewrite::{rewrite, rewrite_once};
pub use turtle::{interpret, interpret_with_map, BracketGroup, Interpretation, TurtleConfig};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Default cap on the number of symbols a rewrite may produce.
pub const DEFAULT_SYMBOL_BUDGET: usize = 1_000_000;

/// Errors produced by grammar parsing, rewriting, and interpretation.
#[derive(Debug, thiserror::Error)]
pub enum GrammarError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undeclared parameter `{name}` at {line}:{col}")]
    UndeclaredParameter { name: String, line: usize, col: usize },
    #[error("unbalanced brackets at {line}:{col}")]
    UnbalancedBrackets { line: usize, col: usize },
    #[error("duplicate constant `{name}` at {line}:{col}")]
    DuplicateConstant { name: String, line: usize, col: usize },
    #[error("rule for `{pred}` at {line}:{col} has non-positive total weight")]
    NonPositiveWeight { pred: String, line: usize, col: usize },
    #[error("rewrite exceeded symbol budget of {budget}")]
    SymbolBudgetExceeded { budget: usize },
    #[error("parameter evaluation produced a non-finite value in rule for `{pred}`")]
    NonFiniteParameter { pred: String },
    #[error("pop from empty turtle stack at symbol {index}")]
    PopEmptyStack { index: usize },
}

/// Binary operators of the parameter expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Comparison operators usable in rule guards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

/// Arithmetic expression over numbers, rule parameters, and grammar constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluate with the given variable bindings.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Var(name) => env(name),
            Expr::Neg(e) => e.eval(env).map(|v| -v),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env)?, b.eval(env)?);
                Some(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                })
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(_) | Expr::Var(_) => 4,
        }
    }

    /// Collect variable names referenced by the expression.
    pub fn variables<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => out.push(name),
            Expr::Neg(e) => e.variables(out),
            Expr::Bin(_, a, b) => {
                a.variables(out);
                b.variables(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parent_prec: u8, right: bool) -> fmt::Result {
            // Right children of left-associative operators need parentheses
            // whenever their precedence does not exceed the parent's.
            let need = child.precedence() < parent_prec || (right && child.precedence() == parent_prec);
            if need {
                write!(f, "({child})")
            } else {
                write!(f, "{child}")
            }
        }
        match self {
            Expr::Num(v) => {
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    write!(f, "{}", *v as i64)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Neg(e) => {
                if e.precedence() < self.precedence() {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Bin(op, a, b) => {
                let prec = self.precedence();
                write_child(f, a, prec, false)?;
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, " {sym} ")?;
                write_child(f, b, prec, true)
            }
        }
    }
}

/// Guard condition on a rule: `lhs op rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

impl Guard {
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Option<bool> {
        let (a, b) = (self.lhs.eval(env)?, self.rhs.eval(env)?);
        Some(match self.op {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        })
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        };
        write!(f, "{} {} {}", self.lhs, op, self.rhs)
    }
}

/// Symbol template inside a rule successor; arguments are expressions over
/// the predecessor's parameters and grammar constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTemplate {
    pub name: String,
    pub args: Vec<Expr>,
}

impl fmt::Display for SymbolTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A rewrite rule: predecessor symbol with named parameters, optional guard,
/// and one or more weighted successors.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub predecessor: String,
    pub params: Vec<String>,
    pub guard: Option<Guard>,
    pub successors: Vec<(f64, Vec<SymbolTemplate>)>,
}

/// A parsed parametric L-system grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub axiom: SymbolString,
    pub rules: Vec<Rule>,
    pub constants: BTreeMap<String, f64>,
    /// Cap on symbols produced by a single [`rewrite`] call.
    pub symbol_budget: usize,
}

impl Grammar {
    /// Canonical text form; parsing it yields a structurally equal grammar.
    pub fn print_canonical(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.constants {
            out.push_str(&format!("const {name} = {};\n", Expr::Num(*value)));
        }
        out.push_str(&format!("axiom: {};\n", self.axiom));
        for rule in &self.rules {
            out.push_str(&rule.predecessor);
            if !rule.params.is_empty() {
                out.push('(');
                out.push_str(&rule.params.join(", "));
                out.push(')');
            }
            if let Some(guard) = &rule.guard {
                out.push_str(&format!(" : {guard}"));
            }
            out.push_str(" -> ");
            for (i, (weight, body)) in rule.successors.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                out.push_str(&format!("{}: ", Expr::Num(*weight)));
                let body_text: Vec<String> = body.iter().map(|s| s.to_string()).collect();
                out.push_str(&body_text.join(" "));
            }
            out.push_str(";\n");
        }
        out
    }
}

/// One symbol of a symbol string: a name plus evaluated numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub params: Vec<f64>,
}

impl Symbol {
    pub fn new(name: impl Into<String>, params: Vec<f64>) -> Self {
        Self { name: name.into(), params }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.params.is_empty() {
            write!(f, "(")?;
            for (i, p) in self.params.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", Expr::Num(*p))?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// An ordered list of symbols; the unit rewriting and interpretation act on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SymbolString(pub Vec<Symbol>);

impl SymbolString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bracket symbols `[` and `]` are balanced and all parameters finite.
    pub fn is_well_formed(&self) -> bool {
        let mut depth: i64 = 0;
        for sym in &self.0 {
            match sym.name.as_str() {
                "[" => depth += 1,
                "]" => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                }
                _ => {}
            }
            if sym.params.iter().any(|p| !p.is_finite()) {
                return false;
            }
        }
        depth == 0
    }
}

impl fmt::Display for SymbolString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, sym) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{sym}")?;
        }
        Ok(())
    }
}

/// One tapered segment of a branch skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub start_radius: f64,
    pub end_radius: f64,
    /// Bracket nesting depth at emission.
    pub depth: usize,
    /// Index of the segment this one grows from; `None` for roots.
    pub parent: Option<usize>,
}

impl Segment {
    pub fn start_point(&self) -> nalgebra::Point3<f64> {
        nalgebra::Point3::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn end_point(&self) -> nalgebra::Point3<f64> {
        nalgebra::Point3::new(self.end[0], self.end[1], self.end[2])
    }

    pub fn length(&self) -> f64 {
        (self.end_point() - self.start_point()).norm()
    }
}

/// Output of turtle interpretation: a set of connected tapered segments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Skeleton {
    pub segments: Vec<Segment>,
}

impl Skeleton {
    /// Check the structural invariants: parent/child continuity within
    /// `1e-9` m, strictly positive radii, radii non-increasing from parent
    /// to child.
    pub fn validate(&self) -> Result<(), String> {
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.start_radius <= 0.0 || seg.end_radius <= 0.0 {
                return Err(format!("segment {i} has non-positive radius"));
            }
            if let Some(p) = seg.parent {
                if p >= i {
                    return Err(format!("segment {i} parent {p} out of order"));
                }
                let parent = &self.segments[p];
                let gap = (seg.start_point() - parent.end_point()).norm();
                if gap > 1e-9 {
                    return Err(format!("segment {i} detached from parent {p} by {gap}"));
                }
                if seg.start_radius > parent.end_radius + 1e-12 {
                    return Err(format!("segment {i} radius exceeds parent {p}"));
                }
            }
        }
        Ok(())
    }
}
