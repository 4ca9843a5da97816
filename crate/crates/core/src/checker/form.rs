//! Obligation matrices compiled for search: outer quantifiers stripped,
//! first-order quantifiers lifted to the formula level, names resolved to
//! slots.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use super::CheckError;
use crate::ast::{DlFormula, FolFormula};
use crate::obligations::{negate_fol, Obligation, ObligationKind, SearchRange};
use crate::real::{rational_to_f64, Real};
use crate::semantics::{Compiler, Cond, Expr, OdeOptions, Prog, SemanticsError};

/// Resolution of search values: multiples of 1e-6.
pub const SNAP: i64 = 1_000_000;

pub(crate) fn snapped(k: i64) -> BigRational {
    BigRational::new(BigInt::from(k), BigInt::from(SNAP))
}

/// One searchable coordinate. Interval values are integers `k` standing for
/// `k / SNAP`; finite values are indices.
#[derive(Clone, Debug)]
pub(crate) enum Dim {
    Interval { lo: i64, hi: i64 },
    Finite { values: Vec<BigRational>, approx: Vec<f64> },
}

impl Dim {
    pub fn new(range: &SearchRange) -> Dim {
        let finite = |values: Vec<BigRational>| {
            let approx = values.iter().map(rational_to_f64).collect();
            Dim::Finite { values, approx }
        };
        match range {
            SearchRange::Finite(values) => finite(values.clone()),
            SearchRange::Interval { lo, hi } => {
                let scale = BigRational::from_integer(BigInt::from(SNAP));
                let k_lo = (lo * &scale).ceil().to_integer().to_i64();
                let k_hi = (hi * &scale).floor().to_integer().to_i64();
                if lo == hi {
                    return finite(vec![lo.clone()]);
                }
                match (k_lo, k_hi) {
                    (Some(a), Some(b)) if a <= b => Dim::Interval { lo: a, hi: b },
                    _ => finite(vec![lo.clone(), hi.clone()]),
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Dim::Finite { .. })
    }

    pub fn clamp(&self, c: i64) -> i64 {
        match self {
            Dim::Interval { lo, hi } => c.clamp(*lo, *hi),
            Dim::Finite { values, .. } => c.clamp(0, values.len() as i64 - 1),
        }
    }

    pub fn f64_at(&self, c: i64) -> f64 {
        match self {
            Dim::Interval { .. } => c as f64 / SNAP as f64,
            Dim::Finite { approx, .. } => approx[c as usize],
        }
    }

    pub fn real_at(&self, c: i64) -> Real {
        match self {
            Dim::Interval { .. } => Real::Exact(snapped(c)),
            Dim::Finite { values, .. } => Real::Exact(values[c as usize].clone()),
        }
    }

    /// Coordinate for `u` in `[0, 1)`; the ends get extra weight.
    pub fn from_unit(&self, u: f64) -> i64 {
        match self {
            Dim::Interval { lo, hi } => {
                if u < 1.0 / 16.0 {
                    *lo
                } else if u >= 15.0 / 16.0 {
                    *hi
                } else {
                    let t = (u - 1.0 / 16.0) * 8.0 / 7.0;
                    self.clamp(lo + (t * (hi - lo + 1) as f64) as i64)
                }
            }
            Dim::Finite { values, .. } => ((u * values.len() as f64) as i64).min(values.len() as i64 - 1),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Modal {
    pub prog: Prog,
    pub post: Box<DForm>,
    /// Equalities `slot = expr` of a first-order postcondition usable to
    /// bind a random assignment of `slot` (diamonds only).
    pub pins: Vec<(usize, Expr)>,
}

#[derive(Clone, Debug)]
pub(crate) enum DForm {
    Fol(Cond),
    Not(Box<DForm>),
    And(Box<DForm>, Box<DForm>),
    Or(Box<DForm>, Box<DForm>),
    Implies(Box<DForm>, Box<DForm>),
    Box(Modal),
    Diamond(Modal),
    Quant { slot: usize, exists: bool, body: Box<DForm> },
}

/// Push first-order quantifiers up to the dL level so that every `Lifted`
/// leaf is quantifier-free. Equivalences containing quantifiers are
/// expanded into two implications.
pub fn lift_quantifiers(f: &DlFormula) -> DlFormula {
    fn fol(f: &FolFormula) -> DlFormula {
        if f.is_quantifier_free() {
            return DlFormula::Lifted(f.clone());
        }
        let b = |g: &FolFormula| Box::new(fol(g));
        match f {
            FolFormula::Not(a) => DlFormula::Not(b(a)),
            FolFormula::And(x, y) => DlFormula::And(b(x), b(y)),
            FolFormula::Or(x, y) => DlFormula::Or(b(x), b(y)),
            FolFormula::Implies(x, y) => DlFormula::Implies(b(x), b(y)),
            FolFormula::Iff(x, y) => {
                let fwd = DlFormula::Implies(b(x), b(y));
                let back = DlFormula::Implies(b(y), b(x));
                DlFormula::And(Box::new(fwd), Box::new(back))
            }
            FolFormula::Forall(v, body) => DlFormula::Forall(v.clone(), b(body)),
            FolFormula::Exists(v, body) => DlFormula::Exists(v.clone(), b(body)),
            FolFormula::True | FolFormula::False | FolFormula::Cmp(..) => unreachable!("quantifier-free"),
        }
    }
    let b = |g: &DlFormula| Box::new(lift_quantifiers(g));
    match f {
        DlFormula::Lifted(g) => fol(g),
        DlFormula::Box(p, post) => DlFormula::Box(p.clone(), b(post)),
        DlFormula::Diamond(p, post) => DlFormula::Diamond(p.clone(), b(post)),
        DlFormula::Not(a) => DlFormula::Not(b(a)),
        DlFormula::And(x, y) => DlFormula::And(b(x), b(y)),
        DlFormula::Or(x, y) => DlFormula::Or(b(x), b(y)),
        DlFormula::Implies(x, y) => DlFormula::Implies(b(x), b(y)),
        DlFormula::Forall(v, body) => DlFormula::Forall(v.clone(), b(body)),
        DlFormula::Exists(v, body) => DlFormula::Exists(v.clone(), b(body)),
    }
}

/// Strip the quantifier prefix over the search box; returns the matrix with
/// first-order quantifiers lifted.
pub fn matrix(ob: &Obligation) -> Result<DlFormula, CheckError> {
    let mut f = lift_quantifiers(&ob.formula);
    for (var, _) in &ob.search_box {
        f = match (f, ob.kind) {
            (DlFormula::Forall(v, body), ObligationKind::FalsifyUniversal) | (DlFormula::Exists(v, body), ObligationKind::FindWitness)
                if &v == var =>
            {
                *body
            }
            _ => return Err(CheckError::Prefix(var.clone())),
        };
    }
    let covered = |v: &String| ob.search_box.iter().any(|(b, _)| b == v) || ob.fixed_constants.contains_key(v);
    if let Some(v) = f.read_variables().into_iter().find(|v| !covered(v)) {
        return Err(CheckError::Uncoverable(v));
    }
    Ok(f)
}

pub(crate) struct FormCompiler<'a> {
    pub c: Compiler<'a>,
    pub ob: &'a Obligation,
}

impl<'a> FormCompiler<'a> {
    pub fn new(ob: &'a Obligation, ode: &'a OdeOptions) -> Self {
        FormCompiler { c: Compiler::new(&ob.variables, ode), ob }
    }

    pub fn form(&self, f: &DlFormula) -> Result<DForm, CheckError> {
        let b = |g: &DlFormula| self.form(g).map(Box::new);
        Ok(match f {
            DlFormula::Lifted(g) => DForm::Fol(self.c.cond(g)?),
            DlFormula::Not(a) => DForm::Not(b(a)?),
            DlFormula::And(x, y) => DForm::And(b(x)?, b(y)?),
            DlFormula::Or(x, y) => DForm::Or(b(x)?, b(y)?),
            DlFormula::Implies(x, y) => DForm::Implies(b(x)?, b(y)?),
            // A box post can only fail where its negation holds, so pins come
            // from the negated post.
            DlFormula::Box(p, post) => {
                let prog = self.c.prog(p)?;
                let pins = match &**post {
                    DlFormula::Lifted(g) => post_pins(&prog, &self.c.cond(&negate_fol(g))?),
                    _ => Vec::new(),
                };
                DForm::Box(Modal { prog, post: b(post)?, pins })
            }
            DlFormula::Diamond(p, post) => {
                let prog = self.c.prog(p)?;
                let pins = match &**post {
                    DlFormula::Lifted(g) => post_pins(&prog, &self.c.cond(g)?),
                    _ => Vec::new(),
                };
                DForm::Diamond(Modal { prog, post: b(post)?, pins })
            }
            DlFormula::Forall(v, body) | DlFormula::Exists(v, body) => {
                if !self.ob.inner_ranges.contains_key(v) {
                    return Err(CheckError::Uncoverable(v.clone()));
                }
                DForm::Quant { slot: self.c.slot(v)?, exists: matches!(f, DlFormula::Exists(..)), body: b(body)? }
            }
        })
    }

    /// Search dimension of every slot the search instantiates below the box.
    pub fn inner_dims(&self) -> Result<Vec<Option<Dim>>, SemanticsError> {
        let mut dims = vec![None; self.ob.variables.len()];
        for (name, range) in &self.ob.inner_ranges {
            if let Some(slot) = self.ob.variables.slot(name) {
                dims[slot] = Some(Dim::new(range));
            }
        }
        Ok(dims)
    }
}

/// `x = t` conjuncts of the post where `x` is written exactly once by the
/// program and nothing `t` reads is.
fn post_pins(prog: &Prog, post: &Cond) -> Vec<(usize, Expr)> {
    let mut written = Vec::new();
    prog.may_write(&mut written);
    let mut out = Vec::new();
    for c in post.conjuncts() {
        if let Some((slot, e)) = equation_for(c, None) {
            let mut reads = Vec::new();
            e.slots(&mut reads);
            if prog.write_count(slot) == 1 && reads.iter().all(|s| !written.contains(s)) && !out.iter().any(|(s, _)| *s == slot) {
                out.push((slot, e.clone()));
            }
        }
    }
    out
}

/// Reads a conjunct `x = t` or `t = x` with `x` a slot not occurring in
/// `t`; with `want` set, only for that slot.
pub(crate) fn equation_for(c: &Cond, want: Option<usize>) -> Option<(usize, &Expr)> {
    let Cond::Cmp(crate::ast::CmpOp::Eq, l, r) = c else { return None };
    for (x, t) in [(l, r), (r, l)] {
        if let Expr::Var(s) = x {
            if want.is_none_or(|w| w == *s) && !t.mentions(*s) {
                return Some((*s, t));
            }
        }
    }
    None
}
