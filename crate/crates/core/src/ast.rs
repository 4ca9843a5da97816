//! Syntax trees for terms, first-order formulas, hybrid programs and
//! differential-dynamic-logic formulas, plus the structural operations the
//! rest of the crate builds on.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

/// Polynomial term with rational coefficients, extended with subtraction,
/// negation, division and natural powers.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(BigRational),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    /// Division; the divisor must have a known nonzero sign (checked when a
    /// model is loaded).
    Div(Box<Term>, Box<Term>),
    Pow(Box<Term>, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Ge => ord != Ordering::Less,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    /// The operator obtained by swapping the operands (`a < b` iff `b > a`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
        }
    }
}

/// First-order formula of real arithmetic.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FolFormula {
    True,
    False,
    Cmp(CmpOp, Term, Term),
    Not(Box<FolFormula>),
    And(Box<FolFormula>, Box<FolFormula>),
    Or(Box<FolFormula>, Box<FolFormula>),
    Implies(Box<FolFormula>, Box<FolFormula>),
    Iff(Box<FolFormula>, Box<FolFormula>),
    Forall(String, Box<FolFormula>),
    Exists(String, Box<FolFormula>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OdeSystem {
    pub equations: Vec<(String, Term)>,
    pub domain: FolFormula,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum HybridProgram {
    Assign(String, Term),
    RandomAssign(String),
    Test(FolFormula),
    Ode(OdeSystem),
    Choice(Box<HybridProgram>, Box<HybridProgram>),
    Seq(Box<HybridProgram>, Box<HybridProgram>),
    Loop(Box<HybridProgram>),
}

/// Differential dynamic logic formula. Modality-free subformulas are kept
/// inside a single [`DlFormula::Lifted`] node (see [`DlFormula::normalize`]).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DlFormula {
    Lifted(FolFormula),
    Box(HybridProgram, Box<DlFormula>),
    Diamond(HybridProgram, Box<DlFormula>),
    Not(Box<DlFormula>),
    And(Box<DlFormula>, Box<DlFormula>),
    Or(Box<DlFormula>, Box<DlFormula>),
    Implies(Box<DlFormula>, Box<DlFormula>),
    Forall(String, Box<DlFormula>),
    Exists(String, Box<DlFormula>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubstError {
    #[error("cannot substitute for `{var}`: the program `{program}` writes a variable of the substitution")]
    ProgramClash { var: String, program: String },
}

// ---------------------------------------------------------------------------
// Constructors

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn int(value: i64) -> Term {
        Term::Const(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn constant(value: BigRational) -> Term {
        Term::Const(value)
    }

    pub fn add(self, rhs: Term) -> Term {
        Term::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Term) -> Term {
        Term::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Term) -> Term {
        Term::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn div(self, rhs: Term) -> Term {
        Term::Div(Box::new(self), Box::new(rhs))
    }

    pub fn neg(self) -> Term {
        Term::Neg(Box::new(self))
    }

    pub fn pow(self, exponent: u32) -> Term {
        Term::Pow(Box::new(self), exponent)
    }

    pub fn ge(self, rhs: Term) -> FolFormula {
        FolFormula::Cmp(CmpOp::Ge, self, rhs)
    }

    pub fn gt(self, rhs: Term) -> FolFormula {
        FolFormula::Cmp(CmpOp::Gt, self, rhs)
    }

    pub fn le(self, rhs: Term) -> FolFormula {
        FolFormula::Cmp(CmpOp::Le, self, rhs)
    }

    pub fn lt(self, rhs: Term) -> FolFormula {
        FolFormula::Cmp(CmpOp::Lt, self, rhs)
    }

    pub fn eq(self, rhs: Term) -> FolFormula {
        FolFormula::Cmp(CmpOp::Eq, self, rhs)
    }
}

impl FolFormula {
    pub fn not(self) -> FolFormula {
        FolFormula::Not(Box::new(self))
    }

    pub fn and(self, rhs: FolFormula) -> FolFormula {
        FolFormula::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: FolFormula) -> FolFormula {
        FolFormula::Or(Box::new(self), Box::new(rhs))
    }

    pub fn implies(self, rhs: FolFormula) -> FolFormula {
        FolFormula::Implies(Box::new(self), Box::new(rhs))
    }

    pub fn iff(self, rhs: FolFormula) -> FolFormula {
        FolFormula::Iff(Box::new(self), Box::new(rhs))
    }

    /// Universal quantifier; inner binders of the same name are renamed so
    /// that no name is bound twice along a path.
    pub fn forall(var: impl Into<String>, body: FolFormula) -> FolFormula {
        let var = var.into();
        let body = unshadow_fol(&var, body);
        FolFormula::Forall(var, Box::new(body))
    }

    pub fn exists(var: impl Into<String>, body: FolFormula) -> FolFormula {
        let var = var.into();
        let body = unshadow_fol(&var, body);
        FolFormula::Exists(var, Box::new(body))
    }

    /// Conjunction of a list; `True` when empty.
    pub fn conjunction(parts: impl IntoIterator<Item = FolFormula>) -> FolFormula {
        parts.into_iter().reduce(FolFormula::and).unwrap_or(FolFormula::True)
    }

    /// The top-level conjuncts (flattening nested `And`).
    pub fn conjuncts(&self) -> Vec<&FolFormula> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a FolFormula, out: &mut Vec<&'a FolFormula>) {
            match f {
                FolFormula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            FolFormula::True | FolFormula::False | FolFormula::Cmp(..) => true,
            FolFormula::Not(a) => a.is_quantifier_free(),
            FolFormula::And(a, b) | FolFormula::Or(a, b) | FolFormula::Implies(a, b) | FolFormula::Iff(a, b) => {
                a.is_quantifier_free() && b.is_quantifier_free()
            }
            FolFormula::Forall(..) | FolFormula::Exists(..) => false,
        }
    }
}

impl HybridProgram {
    pub fn assign(var: impl Into<String>, term: Term) -> HybridProgram {
        HybridProgram::Assign(var.into(), term)
    }

    pub fn random(var: impl Into<String>) -> HybridProgram {
        HybridProgram::RandomAssign(var.into())
    }

    pub fn test(cond: FolFormula) -> HybridProgram {
        HybridProgram::Test(cond)
    }

    pub fn seq(self, next: HybridProgram) -> HybridProgram {
        HybridProgram::Seq(Box::new(self), Box::new(next))
    }

    pub fn choice(self, other: HybridProgram) -> HybridProgram {
        HybridProgram::Choice(Box::new(self), Box::new(other))
    }

    pub fn repeat(self) -> HybridProgram {
        HybridProgram::Loop(Box::new(self))
    }

    /// Right-nested sequential composition of a non-empty list.
    pub fn sequence(parts: impl IntoIterator<Item = HybridProgram>) -> Option<HybridProgram> {
        let mut parts: Vec<_> = parts.into_iter().collect();
        let mut acc = parts.pop()?;
        while let Some(prev) = parts.pop() {
            acc = prev.seq(acc);
        }
        Some(acc)
    }

    /// Recognises `(?P; body) ++ ?!P`, returning `(P, body)`.
    pub fn as_if(&self) -> Option<(&FolFormula, &HybridProgram)> {
        if let HybridProgram::Choice(left, right) = self {
            if let (HybridProgram::Seq(first, body), HybridProgram::Test(FolFormula::Not(neg))) = (&**left, &**right) {
                if let HybridProgram::Test(cond) = &**first {
                    if **neg == *cond {
                        return Some((cond, body));
                    }
                }
            }
        }
        None
    }
}

/// `if (condition) then body fi` as `(?condition; body) ++ ?!condition`.
pub fn desugar_if(condition: FolFormula, body: HybridProgram) -> HybridProgram {
    let negated = condition.clone().not();
    HybridProgram::test(condition).seq(body).choice(HybridProgram::test(negated))
}

impl DlFormula {
    pub fn fol(f: FolFormula) -> DlFormula {
        DlFormula::Lifted(f)
    }

    pub fn boxed(program: HybridProgram, post: DlFormula) -> DlFormula {
        DlFormula::Box(program, Box::new(post))
    }

    pub fn diamond(program: HybridProgram, post: DlFormula) -> DlFormula {
        DlFormula::Diamond(program, Box::new(post))
    }

    pub fn not(self) -> DlFormula {
        match self {
            DlFormula::Lifted(f) => DlFormula::Lifted(f.not()),
            other => DlFormula::Not(Box::new(other)),
        }
    }

    pub fn and(self, rhs: DlFormula) -> DlFormula {
        match (self, rhs) {
            (DlFormula::Lifted(a), DlFormula::Lifted(b)) => DlFormula::Lifted(a.and(b)),
            (a, b) => DlFormula::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(self, rhs: DlFormula) -> DlFormula {
        match (self, rhs) {
            (DlFormula::Lifted(a), DlFormula::Lifted(b)) => DlFormula::Lifted(a.or(b)),
            (a, b) => DlFormula::Or(Box::new(a), Box::new(b)),
        }
    }

    pub fn implies(self, rhs: DlFormula) -> DlFormula {
        match (self, rhs) {
            (DlFormula::Lifted(a), DlFormula::Lifted(b)) => DlFormula::Lifted(a.implies(b)),
            (a, b) => DlFormula::Implies(Box::new(a), Box::new(b)),
        }
    }

    pub fn forall(var: impl Into<String>, body: DlFormula) -> DlFormula {
        let var = var.into();
        match body {
            DlFormula::Lifted(f) => DlFormula::Lifted(FolFormula::forall(var, f)),
            body => {
                let body = unshadow_dl(&var, body);
                DlFormula::Forall(var, Box::new(body))
            }
        }
    }

    pub fn exists(var: impl Into<String>, body: DlFormula) -> DlFormula {
        let var = var.into();
        match body {
            DlFormula::Lifted(f) => DlFormula::Lifted(FolFormula::exists(var, f)),
            body => {
                let body = unshadow_dl(&var, body);
                DlFormula::Exists(var, Box::new(body))
            }
        }
    }

    /// Canonical form: every modality-free subtree is a single `Lifted` node.
    pub fn normalize(self) -> DlFormula {
        match self {
            DlFormula::Lifted(f) => DlFormula::Lifted(f),
            DlFormula::Box(p, post) => DlFormula::boxed(p, post.normalize()),
            DlFormula::Diamond(p, post) => DlFormula::diamond(p, post.normalize()),
            DlFormula::Not(a) => a.normalize().not(),
            DlFormula::And(a, b) => a.normalize().and(b.normalize()),
            DlFormula::Or(a, b) => a.normalize().or(b.normalize()),
            DlFormula::Implies(a, b) => a.normalize().implies(b.normalize()),
            DlFormula::Forall(v, body) => DlFormula::forall(v, body.normalize()),
            DlFormula::Exists(v, body) => DlFormula::exists(v, body.normalize()),
        }
    }

    pub fn as_fol(&self) -> Option<&FolFormula> {
        match self {
            DlFormula::Lifted(f) => Some(f),
            _ => None,
        }
    }

    pub fn has_modality(&self) -> bool {
        !matches!(self, DlFormula::Lifted(_))
    }
}

// ---------------------------------------------------------------------------
// Free variables

/// Syntactic variable occurrences not captured by a quantifier. For programs
/// this includes assigned and evolved variables.
pub trait FreeVariables {
    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>);

    fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }
}

fn note(name: &str, bound: &[String], out: &mut BTreeSet<String>) {
    if !bound.iter().any(|b| b == name) {
        out.insert(name.to_string());
    }
}

impl FreeVariables for Term {
    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => note(v, bound, out),
            Term::Const(_) => {}
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) | Term::Div(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Term::Neg(a) | Term::Pow(a, _) => a.collect_free(bound, out),
        }
    }
}

impl FreeVariables for FolFormula {
    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            FolFormula::True | FolFormula::False => {}
            FolFormula::Cmp(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            FolFormula::Not(a) => a.collect_free(bound, out),
            FolFormula::And(a, b) | FolFormula::Or(a, b) | FolFormula::Implies(a, b) | FolFormula::Iff(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            FolFormula::Forall(v, body) | FolFormula::Exists(v, body) => {
                bound.push(v.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }
}

impl FreeVariables for HybridProgram {
    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            HybridProgram::Assign(x, t) => {
                note(x, bound, out);
                t.collect_free(bound, out);
            }
            HybridProgram::RandomAssign(x) => note(x, bound, out),
            HybridProgram::Test(p) => p.collect_free(bound, out),
            HybridProgram::Ode(ode) => {
                for (x, rhs) in &ode.equations {
                    note(x, bound, out);
                    rhs.collect_free(bound, out);
                }
                ode.domain.collect_free(bound, out);
            }
            HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            HybridProgram::Loop(a) => a.collect_free(bound, out),
        }
    }
}

impl FreeVariables for DlFormula {
    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            DlFormula::Lifted(f) => f.collect_free(bound, out),
            DlFormula::Box(p, post) | DlFormula::Diamond(p, post) => {
                p.collect_free(bound, out);
                post.collect_free(bound, out);
            }
            DlFormula::Not(a) => a.collect_free(bound, out),
            DlFormula::And(a, b) | DlFormula::Or(a, b) | DlFormula::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            DlFormula::Forall(v, body) | DlFormula::Exists(v, body) => {
                bound.push(v.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }
}

impl HybridProgram {
    /// Variables possibly written by the program.
    pub fn may_bound(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(p: &HybridProgram, out: &mut BTreeSet<String>) {
            match p {
                HybridProgram::Assign(x, _) | HybridProgram::RandomAssign(x) => {
                    out.insert(x.clone());
                }
                HybridProgram::Test(_) => {}
                HybridProgram::Ode(ode) => out.extend(ode.equations.iter().map(|(x, _)| x.clone())),
                HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                HybridProgram::Loop(a) => walk(a, out),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Variables written on every run of the program.
    pub fn must_bound(&self) -> BTreeSet<String> {
        match self {
            HybridProgram::Assign(x, _) | HybridProgram::RandomAssign(x) => BTreeSet::from([x.clone()]),
            HybridProgram::Test(_) | HybridProgram::Loop(_) => BTreeSet::new(),
            HybridProgram::Ode(ode) => ode.equations.iter().map(|(x, _)| x.clone()).collect(),
            HybridProgram::Choice(a, b) => a.must_bound().intersection(&b.must_bound()).cloned().collect(),
            HybridProgram::Seq(a, b) => a.must_bound().union(&b.must_bound()).cloned().collect(),
        }
    }

    /// Variables whose initial value can influence the program's behaviour.
    pub fn read_variables(&self) -> BTreeSet<String> {
        match self {
            HybridProgram::Assign(_, t) => t.free_variables(),
            HybridProgram::RandomAssign(_) => BTreeSet::new(),
            HybridProgram::Test(p) => p.free_variables(),
            HybridProgram::Ode(ode) => {
                let mut out: BTreeSet<String> = ode.equations.iter().map(|(x, _)| x.clone()).collect();
                for (_, rhs) in &ode.equations {
                    out.extend(rhs.free_variables());
                }
                out.extend(ode.domain.free_variables());
                out
            }
            HybridProgram::Choice(a, b) => a.read_variables().union(&b.read_variables()).cloned().collect(),
            HybridProgram::Seq(a, b) => {
                let written = a.must_bound();
                let mut out = a.read_variables();
                out.extend(b.read_variables().into_iter().filter(|v| !written.contains(v)));
                out
            }
            HybridProgram::Loop(a) => a.read_variables(),
        }
    }
}

impl DlFormula {
    /// Free variables in the semantic sense: variables whose value in the
    /// initial state can affect the truth of the formula.
    pub fn read_variables(&self) -> BTreeSet<String> {
        match self {
            DlFormula::Lifted(f) => f.free_variables(),
            DlFormula::Box(p, post) | DlFormula::Diamond(p, post) => {
                let written = p.must_bound();
                let mut out = p.read_variables();
                out.extend(post.read_variables().into_iter().filter(|v| !written.contains(v)));
                out
            }
            DlFormula::Not(a) => a.read_variables(),
            DlFormula::And(a, b) | DlFormula::Or(a, b) | DlFormula::Implies(a, b) => {
                a.read_variables().union(&b.read_variables()).cloned().collect()
            }
            DlFormula::Forall(v, body) | DlFormula::Exists(v, body) => {
                let mut out = body.read_variables();
                out.remove(v);
                out
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Substitution

/// Fresh name `base'`, `base''`, ... not contained in `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let mut candidate = format!("{base}'");
    while avoid.contains(&candidate) {
        candidate.push('\'');
    }
    candidate
}

impl Term {
    pub fn substitute(&self, var: &str, replacement: &Term) -> Term {
        match self {
            Term::Var(v) if v == var => replacement.clone(),
            Term::Var(_) | Term::Const(_) => self.clone(),
            Term::Add(a, b) => Term::Add(Box::new(a.substitute(var, replacement)), Box::new(b.substitute(var, replacement))),
            Term::Sub(a, b) => Term::Sub(Box::new(a.substitute(var, replacement)), Box::new(b.substitute(var, replacement))),
            Term::Mul(a, b) => Term::Mul(Box::new(a.substitute(var, replacement)), Box::new(b.substitute(var, replacement))),
            Term::Div(a, b) => Term::Div(Box::new(a.substitute(var, replacement)), Box::new(b.substitute(var, replacement))),
            Term::Neg(a) => Term::Neg(Box::new(a.substitute(var, replacement))),
            Term::Pow(a, n) => Term::Pow(Box::new(a.substitute(var, replacement)), *n),
        }
    }
}

impl FolFormula {
    /// Capture-avoiding substitution of `replacement` for free `var`.
    pub fn substitute(&self, var: &str, replacement: &Term) -> FolFormula {
        let sub = |f: &FolFormula| Box::new(f.substitute(var, replacement));
        match self {
            FolFormula::True | FolFormula::False => self.clone(),
            FolFormula::Cmp(op, a, b) => FolFormula::Cmp(*op, a.substitute(var, replacement), b.substitute(var, replacement)),
            FolFormula::Not(a) => FolFormula::Not(sub(a)),
            FolFormula::And(a, b) => FolFormula::And(sub(a), sub(b)),
            FolFormula::Or(a, b) => FolFormula::Or(sub(a), sub(b)),
            FolFormula::Implies(a, b) => FolFormula::Implies(sub(a), sub(b)),
            FolFormula::Iff(a, b) => FolFormula::Iff(sub(a), sub(b)),
            FolFormula::Forall(v, body) | FolFormula::Exists(v, body) => {
                let rebuild = |name: String, body: FolFormula| match self {
                    FolFormula::Forall(..) => FolFormula::Forall(name, Box::new(body)),
                    _ => FolFormula::Exists(name, Box::new(body)),
                };
                if v == var || !body.free_variables().contains(var) {
                    return self.clone();
                }
                let repl_vars = replacement.free_variables();
                if repl_vars.contains(v) {
                    let mut avoid = body.free_variables();
                    avoid.extend(repl_vars);
                    avoid.insert(var.to_string());
                    let renamed = fresh_name(v, &avoid);
                    let body = body.substitute(v, &Term::Var(renamed.clone()));
                    rebuild(renamed, body.substitute(var, replacement))
                } else {
                    rebuild(v.clone(), body.substitute(var, replacement))
                }
            }
        }
    }
}

impl HybridProgram {
    /// Substitution into a program that writes neither `var` nor any variable
    /// of the replacement.
    fn substitute_reads(&self, var: &str, replacement: &Term) -> HybridProgram {
        match self {
            HybridProgram::Assign(x, t) => HybridProgram::Assign(x.clone(), t.substitute(var, replacement)),
            HybridProgram::RandomAssign(_) => self.clone(),
            HybridProgram::Test(p) => HybridProgram::Test(p.substitute(var, replacement)),
            HybridProgram::Ode(ode) => HybridProgram::Ode(OdeSystem {
                equations: ode.equations.iter().map(|(x, rhs)| (x.clone(), rhs.substitute(var, replacement))).collect(),
                domain: ode.domain.substitute(var, replacement),
            }),
            HybridProgram::Choice(a, b) => a.substitute_reads(var, replacement).choice(b.substitute_reads(var, replacement)),
            HybridProgram::Seq(a, b) => a.substitute_reads(var, replacement).seq(b.substitute_reads(var, replacement)),
            HybridProgram::Loop(a) => a.substitute_reads(var, replacement).repeat(),
        }
    }
}

/// Capture-avoiding substitution of `replacement` for the free variable
/// `var`. Quantifier binders are renamed (`x'`, `x''`, ...) when needed;
/// program variables cannot be renamed, so a modality whose program writes a
/// variable involved in the substitution is an error unless `var` does not
/// occur free in it.
pub fn substitute(formula: &DlFormula, var: &str, replacement: &Term) -> Result<DlFormula, SubstError> {
    Ok(match formula {
        DlFormula::Lifted(f) => DlFormula::Lifted(f.substitute(var, replacement)),
        DlFormula::Box(p, post) | DlFormula::Diamond(p, post) => {
            if !formula.read_variables().contains(var) {
                return Ok(formula.clone());
            }
            let written = p.may_bound();
            if written.contains(var) || replacement.free_variables().iter().any(|v| written.contains(v)) {
                return Err(SubstError::ProgramClash { var: var.to_string(), program: crate::parser::print_program(p) });
            }
            let p = p.substitute_reads(var, replacement);
            let post = substitute(post, var, replacement)?;
            match formula {
                DlFormula::Box(..) => DlFormula::boxed(p, post),
                _ => DlFormula::diamond(p, post),
            }
        }
        DlFormula::Not(a) => substitute(a, var, replacement)?.not(),
        DlFormula::And(a, b) => substitute(a, var, replacement)?.and(substitute(b, var, replacement)?),
        DlFormula::Or(a, b) => substitute(a, var, replacement)?.or(substitute(b, var, replacement)?),
        DlFormula::Implies(a, b) => substitute(a, var, replacement)?.implies(substitute(b, var, replacement)?),
        DlFormula::Forall(v, body) | DlFormula::Exists(v, body) => {
            let universal = matches!(formula, DlFormula::Forall(..));
            let rebuild = |name: String, body: DlFormula| {
                if universal {
                    DlFormula::Forall(name, Box::new(body))
                } else {
                    DlFormula::Exists(name, Box::new(body))
                }
            };
            if v == var || !body.free_variables().contains(var) {
                return Ok(formula.clone());
            }
            let repl_vars = replacement.free_variables();
            if repl_vars.contains(v) {
                let mut avoid = body.free_variables();
                avoid.extend(repl_vars);
                avoid.insert(var.to_string());
                let renamed = fresh_name(v, &avoid);
                let body = substitute(body, v, &Term::Var(renamed.clone()))?;
                rebuild(renamed, substitute(&body, var, replacement)?)
            } else {
                rebuild(v.clone(), substitute(body, var, replacement)?)
            }
        }
    })
}

/// Renames binders of `var` inside `body` so `var` is bound at most once per path.
fn unshadow_fol(var: &str, body: FolFormula) -> FolFormula {
    match body {
        FolFormula::Forall(ref v, ref inner) | FolFormula::Exists(ref v, ref inner) => {
            let universal = matches!(body, FolFormula::Forall(..));
            let (name, inner) = if v == var {
                let mut avoid = inner.free_variables();
                avoid.extend(inner.binders());
                avoid.insert(var.to_string());
                let fresh = fresh_name(v, &avoid);
                let renamed = inner.substitute(v, &Term::Var(fresh.clone()));
                (fresh, renamed)
            } else {
                (v.clone(), (**inner).clone())
            };
            let inner = unshadow_fol(var, inner);
            if universal {
                FolFormula::Forall(name, Box::new(inner))
            } else {
                FolFormula::Exists(name, Box::new(inner))
            }
        }
        FolFormula::Not(a) => FolFormula::Not(Box::new(unshadow_fol(var, *a))),
        FolFormula::And(a, b) => FolFormula::And(Box::new(unshadow_fol(var, *a)), Box::new(unshadow_fol(var, *b))),
        FolFormula::Or(a, b) => FolFormula::Or(Box::new(unshadow_fol(var, *a)), Box::new(unshadow_fol(var, *b))),
        FolFormula::Implies(a, b) => FolFormula::Implies(Box::new(unshadow_fol(var, *a)), Box::new(unshadow_fol(var, *b))),
        FolFormula::Iff(a, b) => FolFormula::Iff(Box::new(unshadow_fol(var, *a)), Box::new(unshadow_fol(var, *b))),
        other => other,
    }
}

fn unshadow_dl(var: &str, body: DlFormula) -> DlFormula {
    match body {
        DlFormula::Lifted(f) => DlFormula::Lifted(unshadow_fol(var, f)),
        DlFormula::Box(p, post) => DlFormula::Box(p, Box::new(unshadow_dl(var, *post))),
        DlFormula::Diamond(p, post) => DlFormula::Diamond(p, Box::new(unshadow_dl(var, *post))),
        DlFormula::Not(a) => DlFormula::Not(Box::new(unshadow_dl(var, *a))),
        DlFormula::And(a, b) => DlFormula::And(Box::new(unshadow_dl(var, *a)), Box::new(unshadow_dl(var, *b))),
        DlFormula::Or(a, b) => DlFormula::Or(Box::new(unshadow_dl(var, *a)), Box::new(unshadow_dl(var, *b))),
        DlFormula::Implies(a, b) => DlFormula::Implies(Box::new(unshadow_dl(var, *a)), Box::new(unshadow_dl(var, *b))),
        // Programs cannot be renamed, so shadowing binders over modalities stay as written.
        DlFormula::Forall(v, inner) if v == var => DlFormula::Forall(v, inner),
        DlFormula::Exists(v, inner) if v == var => DlFormula::Exists(v, inner),
        DlFormula::Forall(v, inner) => DlFormula::Forall(v, Box::new(unshadow_dl(var, *inner))),
        DlFormula::Exists(v, inner) => DlFormula::Exists(v, Box::new(unshadow_dl(var, *inner))),
    }
}

// ---------------------------------------------------------------------------
// Traversal

impl Term {
    /// Pre-order visit of this term and all subterms.
    pub fn visit(&self, f: &mut dyn FnMut(&Term)) {
        f(self);
        match self {
            Term::Var(_) | Term::Const(_) => {}
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) | Term::Div(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Term::Neg(a) | Term::Pow(a, _) => a.visit(f),
        }
    }

    /// Variables in order of first occurrence.
    pub fn push_vars(&self, out: &mut Vec<String>) {
        self.visit(&mut |t| {
            if let Term::Var(v) = t {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        });
    }
}

impl FolFormula {
    /// Visit every top-level term of every comparison.
    pub fn visit_terms(&self, f: &mut dyn FnMut(&Term)) {
        match self {
            FolFormula::True | FolFormula::False => {}
            FolFormula::Cmp(_, a, b) => {
                f(a);
                f(b);
            }
            FolFormula::Not(a) | FolFormula::Forall(_, a) | FolFormula::Exists(_, a) => a.visit_terms(f),
            FolFormula::And(a, b) | FolFormula::Or(a, b) | FolFormula::Implies(a, b) | FolFormula::Iff(a, b) => {
                a.visit_terms(f);
                b.visit_terms(f);
            }
        }
    }

    /// Variables (free or bound) in order of first occurrence.
    pub fn push_vars(&self, out: &mut Vec<String>) {
        self.visit_terms(&mut |t| t.push_vars(out));
    }

    /// Names bound by quantifiers anywhere in the formula.
    pub fn binders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(f: &FolFormula, out: &mut BTreeSet<String>) {
            match f {
                FolFormula::True | FolFormula::False | FolFormula::Cmp(..) => {}
                FolFormula::Not(a) => walk(a, out),
                FolFormula::And(a, b) | FolFormula::Or(a, b) | FolFormula::Implies(a, b) | FolFormula::Iff(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                FolFormula::Forall(v, a) | FolFormula::Exists(v, a) => {
                    out.insert(v.clone());
                    walk(a, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

impl HybridProgram {
    pub fn visit_terms(&self, f: &mut dyn FnMut(&Term)) {
        match self {
            HybridProgram::Assign(_, t) => f(t),
            HybridProgram::RandomAssign(_) => {}
            HybridProgram::Test(p) => p.visit_terms(f),
            HybridProgram::Ode(ode) => {
                for (_, rhs) in &ode.equations {
                    f(rhs);
                }
                ode.domain.visit_terms(f);
            }
            HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => {
                a.visit_terms(f);
                b.visit_terms(f);
            }
            HybridProgram::Loop(a) => a.visit_terms(f),
        }
    }

    /// Variables read or written, in order of first occurrence.
    pub fn push_vars(&self, out: &mut Vec<String>) {
        let add = |v: &String, out: &mut Vec<String>| {
            if !out.contains(v) {
                out.push(v.clone());
            }
        };
        match self {
            HybridProgram::Assign(x, t) => {
                add(x, out);
                t.push_vars(out);
            }
            HybridProgram::RandomAssign(x) => add(x, out),
            HybridProgram::Test(p) => p.push_vars(out),
            HybridProgram::Ode(ode) => {
                for (x, rhs) in &ode.equations {
                    add(x, out);
                    rhs.push_vars(out);
                }
                ode.domain.push_vars(out);
            }
            HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => {
                a.push_vars(out);
                b.push_vars(out);
            }
            HybridProgram::Loop(a) => a.push_vars(out),
        }
    }

    /// Number of syntactic write sites of `var`.
    pub fn write_count(&self, var: &str) -> usize {
        match self {
            HybridProgram::Assign(x, _) | HybridProgram::RandomAssign(x) => usize::from(x == var),
            HybridProgram::Test(_) => 0,
            HybridProgram::Ode(ode) => ode.equations.iter().filter(|(x, _)| x == var).count(),
            HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => a.write_count(var) + b.write_count(var),
            HybridProgram::Loop(a) => 2 * a.write_count(var),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Term {
        Term::var(name)
    }

    #[test]
    fn if_desugaring_shape() {
        let p = v("x").gt(Term::int(0));
        let body = HybridProgram::assign("y", Term::int(1));
        let prog = desugar_if(p.clone(), body.clone());
        let expected = HybridProgram::test(p.clone()).seq(body.clone()).choice(HybridProgram::test(p.clone().not()));
        assert_eq!(prog, expected);
        assert_eq!(prog.as_if(), Some((&p, &body)));
    }

    #[test]
    fn free_variables_respect_binders() {
        let f = FolFormula::forall("x", v("x").ge(v("y")));
        assert_eq!(f.free_variables(), BTreeSet::from(["y".to_string()]));
        let t = v("v").pow(2).div(Term::int(2).mul(v("anmin")));
        assert_eq!(t.free_variables(), BTreeSet::from(["v".to_string(), "anmin".to_string()]));
    }

    #[test]
    fn substitution_skips_absent_variable() {
        let f = DlFormula::fol(v("x").ge(Term::int(0)));
        assert_eq!(substitute(&f, "y", &Term::int(7)).unwrap(), f);
    }

    #[test]
    fn substitution_renames_capturing_binder() {
        let f = DlFormula::fol(FolFormula::exists("x", v("x").eq(v("y"))));
        let out = substitute(&f, "y", &v("x")).unwrap();
        assert_eq!(out, DlFormula::fol(FolFormula::exists("x'", v("x'").eq(v("x")))));
    }

    #[test]
    fn substitution_refuses_program_clash() {
        let f = DlFormula::boxed(HybridProgram::random("y"), DlFormula::fol(v("y").ge(v("z"))));
        // z is read after the program; y is written by it.
        assert!(substitute(&f, "z", &v("y")).is_err());
        let g = substitute(&f, "z", &Term::int(1)).unwrap();
        assert_eq!(g, DlFormula::boxed(HybridProgram::random("y"), DlFormula::fol(v("y").ge(Term::int(1)))));
        // y is bound by the program before it is read, so it is not free.
        assert_eq!(substitute(&f, "y", &Term::int(3)).unwrap(), f);
    }

    #[test]
    fn renamed_binder_avoids_inner_binders() {
        let f = FolFormula::forall("x", FolFormula::exists("x", FolFormula::forall("x", FolFormula::True)));
        assert_eq!(f.binders().len(), 3);
    }

    #[test]
    fn smart_quantifier_renames_shadowing() {
        let inner = FolFormula::forall("x", v("x").ge(Term::int(0)));
        let outer = FolFormula::forall("x", inner.and(v("x").le(Term::int(1))));
        match outer {
            FolFormula::Forall(x, body) => {
                assert_eq!(x, "x");
                assert!(matches!(&*body, FolFormula::And(a, _) if matches!(&**a, FolFormula::Forall(y, _) if y == "x'")));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn read_and_bound_variables() {
        let p = HybridProgram::random("xc").seq(HybridProgram::test(v("xc").sub(v("x")).ge(v("v"))));
        assert_eq!(p.must_bound(), BTreeSet::from(["xc".to_string()]));
        assert_eq!(p.read_variables(), BTreeSet::from(["x".to_string(), "v".to_string()]));
        let f = DlFormula::boxed(p, DlFormula::fol(v("xc").ge(v("y"))));
        assert_eq!(f.read_variables(), BTreeSet::from(["x".to_string(), "v".to_string(), "y".to_string()]));
    }
}
