//! Slot-indexed forms of terms, formulas and programs for fast evaluation.

use std::sync::Arc;

use super::ode::{CompiledOde, OdeOptions};
use super::SemanticsError;
use crate::ast::{CmpOp, FolFormula, HybridProgram, Term};
use crate::parser::{print_fol, print_program};
use crate::real::{Constant, Scalar};

use super::state::VarTable;

/// Epsilon subtracted from margins of strict comparisons.
pub const STRICT_EPSILON: f64 = 1e-12;

#[derive(Clone, Debug)]
pub enum Expr {
    Var(usize),
    Const(Constant),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn eval<S: Scalar>(&self, v: &[S]) -> Result<S, SemanticsError> {
        Ok(match self {
            Expr::Var(i) => v[*i].clone(),
            Expr::Const(c) => S::from_constant(c),
            Expr::Add(a, b) => a.eval(v)?.add(&b.eval(v)?),
            Expr::Sub(a, b) => a.eval(v)?.sub(&b.eval(v)?),
            Expr::Mul(a, b) => a.eval(v)?.mul(&b.eval(v)?),
            Expr::Neg(a) => a.eval(v)?.neg(),
            Expr::Div(a, b) => a.eval(v)?.div(&b.eval(v)?).ok_or(SemanticsError::DivisionByZero)?,
            Expr::Pow(a, n) => a.eval(v)?.powi(*n),
        })
    }

    /// Fast path for search.
    pub fn eval_f64(&self, v: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => v[*i],
            Expr::Const(c) => c.approx,
            Expr::Add(a, b) => a.eval_f64(v) + b.eval_f64(v),
            Expr::Sub(a, b) => a.eval_f64(v) - b.eval_f64(v),
            Expr::Mul(a, b) => a.eval_f64(v) * b.eval_f64(v),
            Expr::Neg(a) => -a.eval_f64(v),
            Expr::Div(a, b) => a.eval_f64(v) / b.eval_f64(v),
            Expr::Pow(a, n) => {
                let base = a.eval_f64(v);
                let mut acc = 1.0;
                for _ in 0..*n {
                    acc *= base;
                }
                acc
            }
        }
    }

    pub fn mentions(&self, slot: usize) -> bool {
        match self {
            Expr::Var(i) => *i == slot,
            Expr::Const(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.mentions(slot) || b.mentions(slot),
            Expr::Neg(a) | Expr::Pow(a, _) => a.mentions(slot),
        }
    }

    pub fn slots(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Var(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            Expr::Const(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.slots(out);
                b.slots(out);
            }
            Expr::Neg(a) | Expr::Pow(a, _) => a.slots(out),
        }
    }
}

/// Truth value plus a signed distance to the truth boundary (positive when
/// the formula holds). `truth` is `None` when an inexact comparison is too
/// close to call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Judgement {
    pub truth: Option<bool>,
    pub margin: f64,
}

impl Judgement {
    pub fn constant(value: bool) -> Judgement {
        Judgement { truth: Some(value), margin: if value { f64::INFINITY } else { f64::NEG_INFINITY } }
    }

    pub fn not(self) -> Judgement {
        Judgement { truth: self.truth.map(|t| !t), margin: -self.margin }
    }

    pub fn and(self, other: Judgement) -> Judgement {
        let truth = match (self.truth, other.truth) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        };
        Judgement { truth, margin: self.margin.min(other.margin) }
    }

    pub fn or(self, other: Judgement) -> Judgement {
        self.not().and(other.not()).not()
    }
}

/// Margin of a single comparison `l op r`.
pub fn compare_margin(op: CmpOp, l: f64, r: f64) -> f64 {
    let d = l - r;
    match op {
        CmpOp::Ge => d,
        CmpOp::Gt => d - STRICT_EPSILON,
        CmpOp::Le => -d,
        CmpOp::Lt => -d - STRICT_EPSILON,
        CmpOp::Eq => {
            if d == 0.0 {
                f64::INFINITY
            } else {
                -d.abs()
            }
        }
        CmpOp::Ne => {
            if d == 0.0 {
                f64::NEG_INFINITY
            } else {
                d.abs()
            }
        }
    }
}

/// Quantifier-free condition.
#[derive(Clone, Debug)]
pub enum Cond {
    True,
    False,
    Cmp(CmpOp, Expr, Expr),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Implies(Box<Cond>, Box<Cond>),
    Iff(Box<Cond>, Box<Cond>),
}

impl Cond {
    /// Truth under plain comparison.
    pub fn holds<S: Scalar>(&self, v: &[S]) -> Result<bool, SemanticsError> {
        Ok(match self {
            Cond::True => true,
            Cond::False => false,
            Cond::Cmp(op, a, b) => a.eval(v)?.compare(*op, &b.eval(v)?),
            Cond::Not(a) => !a.holds(v)?,
            Cond::And(a, b) => a.holds(v)? && b.holds(v)?,
            Cond::Or(a, b) => a.holds(v)? || b.holds(v)?,
            Cond::Implies(a, b) => !a.holds(v)? || b.holds(v)?,
            Cond::Iff(a, b) => a.holds(v)? == b.holds(v)?,
        })
    }

    /// Truth (strict for inexact values) and margin.
    pub fn judge<S: Scalar>(&self, v: &[S]) -> Result<Judgement, SemanticsError> {
        self.judge_with(v, true)
    }

    /// As [`Cond::judge`]; with `strict` off, inexact values are compared
    /// directly instead of being left undecided near ties.
    pub fn judge_with<S: Scalar>(&self, v: &[S], strict: bool) -> Result<Judgement, SemanticsError> {
        Ok(match self {
            Cond::True => Judgement::constant(true),
            Cond::False => Judgement::constant(false),
            Cond::Cmp(op, a, b) => {
                let (l, r) = (a.eval(v)?, b.eval(v)?);
                let truth = if strict { l.compare_strict(*op, &r) } else { Some(l.compare(*op, &r)) };
                let margin = match (op, truth, l.is_exact() && r.is_exact()) {
                    // Exact ties decide equalities even when the doubles differ.
                    (CmpOp::Eq, Some(true), true) => f64::INFINITY,
                    (CmpOp::Ne, Some(false), true) => f64::NEG_INFINITY,
                    _ => compare_margin(*op, l.to_f64(), r.to_f64()),
                };
                Judgement { truth, margin }
            }
            Cond::Not(a) => a.judge_with(v, strict)?.not(),
            Cond::And(a, b) => a.judge_with(v, strict)?.and(b.judge_with(v, strict)?),
            Cond::Or(a, b) => a.judge_with(v, strict)?.or(b.judge_with(v, strict)?),
            Cond::Implies(a, b) => a.judge_with(v, strict)?.not().or(b.judge_with(v, strict)?),
            Cond::Iff(a, b) => {
                let (x, y) = (a.judge_with(v, strict)?, b.judge_with(v, strict)?);
                x.not().or(y).and(y.not().or(x))
            }
        })
    }

    /// Margin only, in floating point (search inner loop).
    pub fn margin_f64(&self, v: &[f64]) -> f64 {
        match self {
            Cond::True => f64::INFINITY,
            Cond::False => f64::NEG_INFINITY,
            Cond::Cmp(op, a, b) => compare_margin(*op, a.eval_f64(v), b.eval_f64(v)),
            Cond::Not(a) => -a.margin_f64(v),
            Cond::And(a, b) => a.margin_f64(v).min(b.margin_f64(v)),
            Cond::Or(a, b) => a.margin_f64(v).max(b.margin_f64(v)),
            Cond::Implies(a, b) => (-a.margin_f64(v)).max(b.margin_f64(v)),
            Cond::Iff(a, b) => {
                let (x, y) = (a.margin_f64(v), b.margin_f64(v));
                ((-x).max(y)).min((-y).max(x))
            }
        }
    }

    /// Top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<&Cond> {
        match self {
            Cond::And(a, b) => {
                let mut out = a.conjuncts();
                out.extend(b.conjuncts());
                out
            }
            other => vec![other],
        }
    }
}

/// Compiled hybrid program. Atomic constructs carry a printable label used
/// in traces.
#[derive(Clone, Debug)]
pub enum Prog {
    Assign { slot: usize, expr: Expr, label: Arc<str> },
    Random { slot: usize, label: Arc<str> },
    Test { cond: Cond, formula: Arc<FolFormula>, label: Arc<str> },
    Ode(Arc<CompiledOde>),
    Choice(Box<Prog>, Box<Prog>),
    Seq(Vec<Prog>),
    Loop(Box<Prog>),
}

impl Prog {
    /// Slots possibly written.
    pub fn may_write(&self, out: &mut Vec<usize>) {
        let add = |s: usize, out: &mut Vec<usize>| {
            if !out.contains(&s) {
                out.push(s);
            }
        };
        match self {
            Prog::Assign { slot, .. } | Prog::Random { slot, .. } => add(*slot, out),
            Prog::Test { .. } => {}
            Prog::Ode(ode) => {
                for s in &ode.vars {
                    add(*s, out);
                }
            }
            Prog::Choice(a, b) => {
                a.may_write(out);
                b.may_write(out);
            }
            Prog::Seq(items) => items.iter().for_each(|p| p.may_write(out)),
            Prog::Loop(a) => a.may_write(out),
        }
    }

    /// Syntactic write sites of `slot`; a loop counts as many.
    pub fn write_count(&self, slot: usize) -> usize {
        match self {
            Prog::Assign { slot: s, .. } | Prog::Random { slot: s, .. } => usize::from(*s == slot),
            Prog::Test { .. } => 0,
            Prog::Ode(ode) => ode.vars.iter().filter(|s| **s == slot).count(),
            Prog::Choice(a, b) => a.write_count(slot) + b.write_count(slot),
            Prog::Seq(items) => items.iter().map(|p| p.write_count(slot)).sum(),
            Prog::Loop(a) => 2 * a.write_count(slot),
        }
    }
}

/// Resolves names against a [`VarTable`].
pub struct Compiler<'a> {
    pub vars: &'a VarTable,
    pub ode: &'a OdeOptions,
}

impl<'a> Compiler<'a> {
    pub fn new(vars: &'a VarTable, ode: &'a OdeOptions) -> Self {
        Compiler { vars, ode }
    }

    pub fn slot(&self, name: &str) -> Result<usize, SemanticsError> {
        self.vars.slot(name).ok_or_else(|| SemanticsError::UndeclaredVariable(name.to_string()))
    }

    pub fn expr(&self, t: &Term) -> Result<Expr, SemanticsError> {
        let b = |t: &Term| self.expr(t).map(Box::new);
        Ok(match t {
            Term::Var(v) => Expr::Var(self.slot(v)?),
            Term::Const(c) => Expr::Const(Constant::new(c.clone())),
            Term::Add(a, c) => Expr::Add(b(a)?, b(c)?),
            Term::Sub(a, c) => Expr::Sub(b(a)?, b(c)?),
            Term::Mul(a, c) => Expr::Mul(b(a)?, b(c)?),
            Term::Neg(a) => Expr::Neg(b(a)?),
            Term::Div(a, c) => Expr::Div(b(a)?, b(c)?),
            Term::Pow(a, n) => Expr::Pow(b(a)?, *n),
        })
    }

    pub fn cond(&self, f: &FolFormula) -> Result<Cond, SemanticsError> {
        let b = |f: &FolFormula| self.cond(f).map(Box::new);
        Ok(match f {
            FolFormula::True => Cond::True,
            FolFormula::False => Cond::False,
            FolFormula::Cmp(op, l, r) => Cond::Cmp(*op, self.expr(l)?, self.expr(r)?),
            FolFormula::Not(a) => Cond::Not(b(a)?),
            FolFormula::And(x, y) => Cond::And(b(x)?, b(y)?),
            FolFormula::Or(x, y) => Cond::Or(b(x)?, b(y)?),
            FolFormula::Implies(x, y) => Cond::Implies(b(x)?, b(y)?),
            FolFormula::Iff(x, y) => Cond::Iff(b(x)?, b(y)?),
            FolFormula::Forall(..) | FolFormula::Exists(..) => return Err(SemanticsError::Quantifier(print_fol(f))),
        })
    }

    pub fn prog(&self, p: &HybridProgram) -> Result<Prog, SemanticsError> {
        Ok(match p {
            HybridProgram::Assign(x, t) => Prog::Assign { slot: self.slot(x)?, expr: self.expr(t)?, label: print_program(p).into() },
            HybridProgram::RandomAssign(x) => Prog::Random { slot: self.slot(x)?, label: print_program(p).into() },
            HybridProgram::Test(q) => Prog::Test { cond: self.cond(q)?, formula: Arc::new(q.clone()), label: print_program(p).into() },
            HybridProgram::Ode(sys) => Prog::Ode(Arc::new(CompiledOde::compile(self, sys)?)),
            HybridProgram::Choice(a, b) => Prog::Choice(Box::new(self.prog(a)?), Box::new(self.prog(b)?)),
            HybridProgram::Seq(..) => {
                let mut items = Vec::new();
                self.flatten(p, &mut items)?;
                Prog::Seq(items)
            }
            HybridProgram::Loop(a) => Prog::Loop(Box::new(self.prog(a)?)),
        })
    }

    fn flatten(&self, p: &HybridProgram, out: &mut Vec<Prog>) -> Result<(), SemanticsError> {
        match p {
            HybridProgram::Seq(a, b) => {
                self.flatten(a, out)?;
                self.flatten(b, out)
            }
            other => {
                out.push(self.prog(other)?);
                Ok(())
            }
        }
    }
}
