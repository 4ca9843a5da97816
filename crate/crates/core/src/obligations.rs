//! Proof obligations generated from a model and an invariant candidate:
//! the loop-rule branches, the exploiting- and unchallenged-controller
//! conditions and the friendliness probe.
//!
//! Every obligation is closed: its outer quantifiers range over the state
//! variables it reads, constants are fixed to the model's values (unless
//! constant search is requested) and each quantified variable has a search
//! range.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::ast::{fresh_name, CmpOp, DlFormula, FolFormula, FreeVariables, HybridProgram, Term};
use crate::model::{Domain, Model};
use crate::parser::DEFAULT_BOUND;
use crate::parser::{print_dl, print_term};
use crate::real::{format_rational, Real};
use crate::semantics::{eval_term, State, VarTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObligationKind {
    FalsifyUniversal,
    FindWitness,
}

impl ObligationKind {
    pub fn dual(self) -> ObligationKind {
        match self {
            ObligationKind::FalsifyUniversal => ObligationKind::FindWitness,
            ObligationKind::FindWitness => ObligationKind::FalsifyUniversal,
        }
    }
}

impl fmt::Display for ObligationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObligationKind::FalsifyUniversal => "FalsifyUniversal",
            ObligationKind::FindWitness => "FindWitness",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SearchRange {
    Interval { lo: BigRational, hi: BigRational },
    Finite(Vec<BigRational>),
}

impl SearchRange {
    pub fn interval(lo: i64, hi: i64) -> SearchRange {
        SearchRange::Interval { lo: BigRational::from_integer(BigInt::from(lo)), hi: BigRational::from_integer(BigInt::from(hi)) }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            SearchRange::Finite(_) => true,
            SearchRange::Interval { lo, hi } => lo == hi,
        }
    }

    pub fn contains(&self, v: &BigRational) -> bool {
        match self {
            SearchRange::Interval { lo, hi } => lo <= v && v <= hi,
            SearchRange::Finite(values) => values.contains(v),
        }
    }
}

impl fmt::Display for SearchRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchRange::Interval { lo, hi } => write!(f, "[{}, {}]", format_rational(lo), format_rational(hi)),
            SearchRange::Finite(values) => {
                let parts: Vec<String> = values.iter().map(format_rational).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
        }
    }
}

/// Which obligations to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Selector {
    Loop,
    Rho,
    Gamma,
    Exploit,
    Chi,
    NotChi,
    Psi,
    Friendly,
    All,
}

impl FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "loop" => Selector::Loop,
            "rho" => Selector::Rho,
            "gamma" => Selector::Gamma,
            "exploit" => Selector::Exploit,
            "chi" => Selector::Chi,
            "not-chi" | "not_chi" => Selector::NotChi,
            "psi" => Selector::Psi,
            "friendly" => Selector::Friendly,
            "all" => Selector::All,
            other => return Err(format!("unknown obligation selector `{other}` (expected loop, rho, gamma, exploit, chi, not-chi, psi, friendly or all)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObligationError {
    #[error("undeclared variable `{0}` in the invariant")]
    UndeclaredVariable(String),
    #[error("the model has no RELATION")]
    MissingRelation,
    #[error("unknown invariant `{0}`")]
    UnknownInvariant(String),
    #[error("`{0}` is not free in the invariant")]
    NotFree(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("bad search range for `{var}`: {message}")]
    BadRange { var: String, message: String },
    #[error("psi needs an instantiation VAR=TERM")]
    MissingInstantiation,
}

/// Options shared by every obligation generated for one model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObligationSettings {
    /// Replacement values for constants.
    pub constants: BTreeMap<String, BigRational>,
    /// Replacement search ranges.
    pub boxes: BTreeMap<String, SearchRange>,
    /// Quantify over constants too (within `[v/2, 2v]`, filtered by the
    /// constant conjuncts of init) instead of fixing them.
    pub search_constants: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obligation {
    pub name: String,
    pub formula: DlFormula,
    pub kind: ObligationKind,
    /// Quantified variables in quantifier order.
    pub search_box: Vec<(String, SearchRange)>,
    pub fixed_constants: BTreeMap<String, BigRational>,
    /// Ranges for variables the search instantiates below the outer
    /// quantifiers: random assignments and inner quantifiers.
    pub inner_ranges: BTreeMap<String, SearchRange>,
    /// Every name the formula mentions: the slots of an evaluation state.
    pub variables: Arc<VarTable>,
}

impl Obligation {
    pub fn range(&self, var: &str) -> Option<&SearchRange> {
        self.search_box.iter().find(|(v, _)| v == var).map(|(_, r)| r)
    }

    pub fn text(&self) -> String {
        print_dl(&self.formula)
    }

    /// Structural negation with the dual kind and the same box.
    pub fn negated(&self) -> Obligation {
        Obligation {
            name: format!("not {}", self.name),
            formula: negate(&self.formula),
            kind: self.kind.dual(),
            search_box: self.search_box.clone(),
            fixed_constants: self.fixed_constants.clone(),
            inner_ranges: self.inner_ranges.clone(),
            variables: self.variables.clone(),
        }
    }

    /// Build an obligation from a closed formula whose outer quantifiers
    /// determine the kind; ranges come from `ranges`, defaulting to
    /// `[-100, 100]`.
    pub fn from_formula(
        name: impl Into<String>,
        formula: DlFormula,
        ranges: &BTreeMap<String, SearchRange>,
        constants: BTreeMap<String, BigRational>,
    ) -> Obligation {
        let formula = formula.normalize();
        let kind = match &formula {
            DlFormula::Exists(..) | DlFormula::Lifted(FolFormula::Exists(..)) => ObligationKind::FindWitness,
            _ => ObligationKind::FalsifyUniversal,
        };
        let search_box: Vec<(String, SearchRange)> = outer_quantified(&formula)
            .into_iter()
            .map(|v| {
                let r = ranges.get(&v).cloned().unwrap_or_else(|| SearchRange::interval(-DEFAULT_BOUND, DEFAULT_BOUND));
                (v, r)
            })
            .collect();
        let variables = Arc::new(table_for(&formula, &constants, &[]));
        let inner_ranges = inner_variables(&formula)
            .into_iter()
            .filter(|v| !search_box.iter().any(|(b, _)| b == v))
            .map(|v| {
                let r = ranges.get(&v).cloned().unwrap_or_else(|| SearchRange::interval(-DEFAULT_BOUND, DEFAULT_BOUND));
                (v, r)
            })
            .collect();
        Obligation { name: name.into(), formula, kind, search_box, fixed_constants: constants, inner_ranges, variables }
    }
}

impl Serialize for Obligation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let boxes: BTreeMap<&str, String> = self.search_box.iter().map(|(v, r)| (v.as_str(), r.to_string())).collect();
        let constants: BTreeMap<&str, String> = self.fixed_constants.iter().map(|(k, v)| (k.as_str(), format_rational(v))).collect();
        let mut st = s.serialize_struct("Obligation", 5)?;
        st.serialize_field("name", &self.name)?;
        st.serialize_field("formula", &self.text())?;
        st.serialize_field("kind", &self.kind)?;
        st.serialize_field("box", &boxes)?;
        st.serialize_field("constants", &constants)?;
        st.end()
    }
}

/// Variables bound by the outer quantifier prefix of one polarity.
fn outer_quantified(f: &DlFormula) -> Vec<String> {
    let mut out = Vec::new();
    match f {
        DlFormula::Forall(..) | DlFormula::Lifted(FolFormula::Forall(..)) => collect_prefix(f, true, &mut out),
        DlFormula::Exists(..) | DlFormula::Lifted(FolFormula::Exists(..)) => collect_prefix(f, false, &mut out),
        _ => {}
    }
    out
}

fn collect_prefix(f: &DlFormula, universal: bool, out: &mut Vec<String>) {
    match (f, universal) {
        (DlFormula::Forall(v, body), true) | (DlFormula::Exists(v, body), false) => {
            out.push(v.clone());
            collect_prefix(body, universal, out);
        }
        (DlFormula::Lifted(fol), _) => {
            let mut g = fol;
            while let (FolFormula::Forall(v, body), true) | (FolFormula::Exists(v, body), false) = (g, universal) {
                out.push(v.clone());
                g = body;
            }
        }
        _ => {}
    }
}

/// Randomly assigned variables and variables bound by quantifiers.
fn inner_variables(f: &DlFormula) -> BTreeSet<String> {
    fn prog(p: &HybridProgram, out: &mut BTreeSet<String>) {
        match p {
            HybridProgram::RandomAssign(x) => {
                out.insert(x.clone());
            }
            HybridProgram::Test(f) => fol(f, out),
            HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => {
                prog(a, out);
                prog(b, out);
            }
            HybridProgram::Loop(a) => prog(a, out),
            HybridProgram::Assign(..) | HybridProgram::Ode(_) => {}
        }
    }
    fn fol(f: &FolFormula, out: &mut BTreeSet<String>) {
        let mut binders = Vec::new();
        push_fol_binders(f, &mut binders);
        out.extend(binders);
    }
    fn dl(f: &DlFormula, out: &mut BTreeSet<String>) {
        match f {
            DlFormula::Lifted(g) => fol(g, out),
            DlFormula::Box(p, post) | DlFormula::Diamond(p, post) => {
                prog(p, out);
                dl(post, out);
            }
            DlFormula::Not(a) => dl(a, out),
            DlFormula::And(a, b) | DlFormula::Or(a, b) | DlFormula::Implies(a, b) => {
                dl(a, out);
                dl(b, out);
            }
            DlFormula::Forall(v, body) | DlFormula::Exists(v, body) => {
                out.insert(v.clone());
                dl(body, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    dl(f, &mut out);
    out
}

/// Constants, then `first`, then every other name in order of occurrence.
fn table_for(f: &DlFormula, constants: &BTreeMap<String, BigRational>, first: &[String]) -> VarTable {
    let mut names: Vec<String> = constants.keys().cloned().collect();
    names.extend(first.iter().cloned());
    push_dl_vars(f, &mut names);
    VarTable::new(names)
}

fn push_dl_vars(f: &DlFormula, out: &mut Vec<String>) {
    let add = |v: &String, out: &mut Vec<String>| {
        if !out.contains(v) {
            out.push(v.clone());
        }
    };
    match f {
        DlFormula::Lifted(g) => {
            push_fol_binders(g, out);
            g.push_vars(out);
        }
        DlFormula::Box(p, post) | DlFormula::Diamond(p, post) => {
            p.push_vars(out);
            let mut tests = Vec::new();
            collect_test_binders(p, &mut tests);
            for t in tests {
                add(&t, out);
            }
            push_dl_vars(post, out);
        }
        DlFormula::Not(a) => push_dl_vars(a, out),
        DlFormula::And(a, b) | DlFormula::Or(a, b) | DlFormula::Implies(a, b) => {
            push_dl_vars(a, out);
            push_dl_vars(b, out);
        }
        DlFormula::Forall(v, body) | DlFormula::Exists(v, body) => {
            add(v, out);
            push_dl_vars(body, out);
        }
    }
}

fn push_fol_binders(f: &FolFormula, out: &mut Vec<String>) {
    match f {
        FolFormula::Forall(v, body) | FolFormula::Exists(v, body) => {
            if !out.contains(v) {
                out.push(v.clone());
            }
            push_fol_binders(body, out);
        }
        FolFormula::Not(a) => push_fol_binders(a, out),
        FolFormula::And(a, b) | FolFormula::Or(a, b) | FolFormula::Implies(a, b) | FolFormula::Iff(a, b) => {
            push_fol_binders(a, out);
            push_fol_binders(b, out);
        }
        _ => {}
    }
}

fn collect_test_binders(p: &HybridProgram, out: &mut Vec<String>) {
    match p {
        HybridProgram::Test(f) => push_fol_binders(f, out),
        HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => {
            collect_test_binders(a, out);
            collect_test_binders(b, out);
        }
        HybridProgram::Loop(a) => collect_test_binders(a, out),
        _ => {}
    }
}

/// Structural negation: quantifiers and modalities are dualised and
/// negations are pushed down to comparisons.
pub fn negate(f: &DlFormula) -> DlFormula {
    match f {
        DlFormula::Lifted(g) => DlFormula::Lifted(negate_fol(g)),
        DlFormula::Box(p, post) => DlFormula::diamond(p.clone(), negate(post)),
        DlFormula::Diamond(p, post) => DlFormula::boxed(p.clone(), negate(post)),
        DlFormula::Not(a) => (**a).clone(),
        DlFormula::And(a, b) => negate(a).or(negate(b)),
        DlFormula::Or(a, b) => negate(a).and(negate(b)),
        DlFormula::Implies(a, b) => (**a).clone().and(negate(b)),
        DlFormula::Forall(v, body) => DlFormula::Exists(v.clone(), Box::new(negate(body))),
        DlFormula::Exists(v, body) => DlFormula::Forall(v.clone(), Box::new(negate(body))),
    }
}

pub fn negate_fol(f: &FolFormula) -> FolFormula {
    match f {
        FolFormula::True => FolFormula::False,
        FolFormula::False => FolFormula::True,
        FolFormula::Cmp(op, a, b) => {
            let flipped = match op {
                CmpOp::Ge => CmpOp::Lt,
                CmpOp::Gt => CmpOp::Le,
                CmpOp::Le => CmpOp::Gt,
                CmpOp::Lt => CmpOp::Ge,
                CmpOp::Eq => CmpOp::Ne,
                CmpOp::Ne => CmpOp::Eq,
            };
            FolFormula::Cmp(flipped, a.clone(), b.clone())
        }
        FolFormula::Not(a) => (**a).clone(),
        FolFormula::And(a, b) => negate_fol(a).or(negate_fol(b)),
        FolFormula::Or(a, b) => negate_fol(a).and(negate_fol(b)),
        FolFormula::Implies(a, b) => (**a).clone().and(negate_fol(b)),
        FolFormula::Iff(a, b) => (**a).clone().iff(negate_fol(b)),
        FolFormula::Forall(v, body) => FolFormula::Exists(v.clone(), Box::new(negate_fol(body))),
        FolFormula::Exists(v, body) => FolFormula::Forall(v.clone(), Box::new(negate_fol(body))),
    }
}

/// Obligation generator for one model.
pub struct Generator<'m> {
    model: &'m Model,
    settings: ObligationSettings,
    constants: BTreeMap<String, BigRational>,
}

impl<'m> Generator<'m> {
    pub fn new(model: &'m Model, settings: ObligationSettings) -> Result<Generator<'m>, ObligationError> {
        let mut constants = model.constant_values();
        for (name, value) in &settings.constants {
            if !constants.contains_key(name) {
                return Err(ObligationError::UnknownConstant(name.clone()));
            }
            constants.insert(name.clone(), value.clone());
        }
        for (var, range) in &settings.boxes {
            if let SearchRange::Interval { lo, hi } = range {
                if lo > hi {
                    return Err(ObligationError::BadRange { var: var.clone(), message: "lower bound above upper bound".into() });
                }
            }
        }
        Ok(Generator { model, settings, constants })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn constants(&self) -> &BTreeMap<String, BigRational> {
        &self.constants
    }

    pub fn invariant(&self, name: &str) -> Result<&'m FolFormula, ObligationError> {
        self.model.invariant(name).ok_or_else(|| ObligationError::UnknownInvariant(name.to_string()))
    }

    fn check_declared(&self, zeta: &FolFormula) -> Result<(), ObligationError> {
        for v in zeta.free_variables() {
            if !self.model.is_constant(&v) && !self.model.variables.contains(&v) {
                return Err(ObligationError::UndeclaredVariable(v));
            }
        }
        Ok(())
    }

    fn relation(&self) -> Result<&'m crate::model::Relation, ObligationError> {
        self.model.relation.as_ref().ok_or(ObligationError::MissingRelation)
    }

    fn evaluate_bound(&self, t: &Term) -> BigRational {
        let names: Vec<&String> = self.constants.keys().collect();
        let vars = Arc::new(VarTable::new(names.iter().map(|s| s.as_str())));
        let values = self.constants.values().map(|v| Real::Exact(v.clone())).collect();
        let state = State::new(vars, values);
        match eval_term(&state, t) {
            Ok(Real::Exact(r)) => r,
            other => panic!("domain bound `{}` does not evaluate to a rational: {other:?}", print_term(t)),
        }
    }

    fn range_for(&self, var: &str, aliases: &BTreeMap<String, String>) -> SearchRange {
        if let Some(r) = self.settings.boxes.get(var) {
            return r.clone();
        }
        let source = aliases.get(var).map(String::as_str).unwrap_or(var);
        if let Some(r) = self.settings.boxes.get(source) {
            return r.clone();
        }
        if let Some(v) = self.constants.get(source) {
            let two = BigRational::from_integer(BigInt::from(2));
            if v.is_zero() {
                return SearchRange::interval(-1, 1);
            }
            let (a, b) = (v / &two, v * &two);
            return if v.is_positive() { SearchRange::Interval { lo: a, hi: b } } else { SearchRange::Interval { lo: b, hi: a } };
        }
        match self.model.domain(source) {
            Some(Domain::Interval { lo, hi }) => SearchRange::Interval { lo: self.evaluate_bound(lo), hi: self.evaluate_bound(hi) },
            Some(Domain::Finite(values)) => SearchRange::Finite(values.iter().map(|t| self.evaluate_bound(t)).collect()),
            None => SearchRange::interval(-DEFAULT_BOUND, DEFAULT_BOUND),
        }
    }

    /// Close `matrix` over the variables it reads. `aliases` maps fresh
    /// variables to the model variable whose range they share.
    fn close(&self, name: String, matrix: DlFormula, kind: ObligationKind, aliases: &BTreeMap<String, String>) -> Obligation {
        let matrix = matrix.normalize();
        let read = matrix.read_variables();
        let quantify = |v: &String| self.settings.search_constants || !self.constants.contains_key(v);
        let mut order: Vec<String> = Vec::new();
        if self.settings.search_constants {
            order.extend(self.constants.keys().filter(|c| read.contains(*c)).cloned());
        }
        order.extend(self.model.variables.iter().filter(|v| read.contains(*v)).cloned());
        let mut rest: Vec<String> = read.iter().filter(|v| quantify(v) && !order.contains(v)).cloned().collect();
        rest.sort();
        order.extend(rest);
        let search_box: Vec<(String, SearchRange)> = order.iter().map(|v| (v.clone(), self.range_for(v, aliases))).collect();
        let mut formula = matrix;
        for v in order.iter().rev() {
            formula = match kind {
                ObligationKind::FalsifyUniversal => DlFormula::forall(v.clone(), formula),
                ObligationKind::FindWitness => DlFormula::exists(v.clone(), formula),
            };
        }
        let fixed: BTreeMap<String, BigRational> =
            if self.settings.search_constants { BTreeMap::new() } else { self.constants.clone() };
        let mut first: Vec<String> = order.clone();
        first.extend(self.model.variables.iter().cloned());
        let variables = Arc::new(table_for(&formula, &fixed, &first));
        let inner_ranges = inner_variables(&formula)
            .into_iter()
            .filter(|v| !order.contains(v))
            .map(|v| {
                let r = self.range_for(&v, aliases);
                (v, r)
            })
            .collect();
        Obligation { name, formula, kind, search_box, fixed_constants: fixed, inner_ranges, variables }
    }

    /// The constant conjuncts of init followed by `parts`.
    fn antecedent(&self, parts: Vec<FolFormula>) -> FolFormula {
        let mut all: Vec<FolFormula> = self.model.constant_conjuncts();
        all.extend(parts);
        FolFormula::conjunction(all)
    }

    fn lifted(f: FolFormula) -> DlFormula {
        DlFormula::Lifted(f)
    }

    /// Loop-rule branches (i) init -> zeta, (ii) zeta -> [body] zeta,
    /// (iii) zeta -> guarantee.
    pub fn loop_obligations(&self, label: &str, zeta: &FolFormula) -> Result<Vec<Obligation>, ObligationError> {
        self.check_declared(zeta)?;
        let none = BTreeMap::new();
        let init = Self::lifted(self.model.init.clone().implies(zeta.clone()));
        let step = Self::lifted(self.antecedent(vec![zeta.clone()])).implies(DlFormula::boxed(self.model.loop_body(), Self::lifted(zeta.clone())));
        let post = Self::lifted(self.antecedent(vec![zeta.clone()]).implies(self.model.guarantee.clone()));
        Ok(vec![
            self.close(format!("loop(i)[{label}]"), init, ObligationKind::FalsifyUniversal, &none),
            self.close(format!("loop(ii)[{label}]"), step, ObligationKind::FalsifyUniversal, &none),
            self.close(format!("loop(iii)[{label}]"), post, ObligationKind::FalsifyUniversal, &none),
        ])
    }

    /// Loop branch (ii), the gamma condition.
    pub fn gamma_obligation(&self, label: &str, zeta: &FolFormula) -> Result<Obligation, ObligationError> {
        let mut o = self.loop_obligations(label, zeta)?.remove(1);
        o.name = format!("gamma[{label}]");
        Ok(o)
    }

    /// forall (zeta & R(e, e1) -> <env>(e = e1)).
    pub fn rho_obligation(&self, label: &str, zeta: &FolFormula) -> Result<Obligation, ObligationError> {
        self.check_declared(zeta)?;
        let rel = self.relation()?;
        let goal = Term::var(&rel.env_var).eq(Term::var(&rel.successor));
        let matrix = Self::lifted(self.antecedent(vec![zeta.clone(), rel.formula.clone()])).implies(DlFormula::diamond(self.model.env.clone(), Self::lifted(goal)));
        Ok(self.close(format!("rho[{label}]"), matrix, ObligationKind::FalsifyUniversal, &BTreeMap::new()))
    }

    /// exists (zeta(e0) & R(e0, e) & <aux; ctrl; plant> !zeta(e)).
    pub fn exploit_witness(&self, label: &str, zeta: &FolFormula) -> Result<Obligation, ObligationError> {
        self.check_declared(zeta)?;
        let rel = self.relation()?;
        let mut avoid: BTreeSet<String> = self.model.state_names().into_iter().collect();
        avoid.insert(rel.successor.clone());
        let e = rel.env_var.as_str();
        let e0 = fresh_name(e, &avoid);
        let e0_term = Term::var(&e0);
        let zeta0 = zeta.substitute(e, &e0_term);
        let r = rel.formula.substitute(e, &e0_term).substitute(&rel.successor, &Term::var(e));
        let tail = self.model.aux.clone().seq(self.model.ctrl.clone().seq(self.model.plant.clone()));
        let matrix = Self::lifted(self.antecedent(vec![zeta0, r])).and(DlFormula::diamond(tail, Self::lifted(zeta.clone().not())));
        let aliases = BTreeMap::from([(e0, e.to_string())]);
        Ok(self.close(format!("exploit[{label}]"), matrix, ObligationKind::FindWitness, &aliases))
    }

    /// chi = forall (zeta -> [env; aux; plant] zeta) and its structural
    /// negation.
    pub fn chi_obligation(&self, label: &str, zeta: &FolFormula) -> Result<(Obligation, Obligation), ObligationError> {
        self.check_declared(zeta)?;
        let without_ctrl = self.model.env.clone().seq(self.model.aux.clone().seq(self.model.plant.clone()));
        let matrix = Self::lifted(self.antecedent(vec![zeta.clone()])).implies(DlFormula::boxed(without_ctrl, Self::lifted(zeta.clone())));
        let chi = self.close(format!("chi[{label}]"), matrix, ObligationKind::FalsifyUniversal, &BTreeMap::new());
        let mut not_chi = chi.negated();
        not_chi.name = format!("not_chi[{label}]");
        Ok((chi, not_chi))
    }

    /// exists (zeta1 & <env; aux>(!zeta & <plant> !zeta1)) with
    /// zeta1 = zeta[var := term].
    pub fn psi_obligation(&self, label: &str, zeta: &FolFormula, var: &str, term: &Term) -> Result<Obligation, ObligationError> {
        self.check_declared(zeta)?;
        if !zeta.free_variables().contains(var) {
            return Err(ObligationError::NotFree(var.to_string()));
        }
        let zeta1 = zeta.substitute(var, term);
        let inner = Self::lifted(zeta.clone().not()).and(DlFormula::diamond(self.model.plant.clone(), Self::lifted(zeta1.clone().not())));
        let prefix = self.model.env.clone().seq(self.model.aux.clone());
        let matrix = Self::lifted(self.antecedent(vec![zeta1])).and(DlFormula::diamond(prefix, inner));
        Ok(self.close(format!("psi[{label}; {var} := {}]", print_term(term)), matrix, ObligationKind::FindWitness, &BTreeMap::new()))
    }

    /// exists (R(e, e1) & !<env>(e = e1)).
    pub fn friendliness_probe(&self) -> Result<Obligation, ObligationError> {
        let rel = self.relation()?;
        let goal = Term::var(&rel.env_var).eq(Term::var(&rel.successor));
        let matrix = Self::lifted(self.antecedent(vec![rel.formula.clone()])).and(DlFormula::diamond(self.model.env.clone(), Self::lifted(goal)).not());
        Ok(self.close("friendly".to_string(), matrix, ObligationKind::FindWitness, &BTreeMap::new()))
    }

    /// Obligations for a selector. `psi` needs an instantiation.
    pub fn select(
        &self,
        label: &str,
        zeta: &FolFormula,
        selector: Selector,
        instantiation: Option<(&str, &Term)>,
    ) -> Result<Vec<Obligation>, ObligationError> {
        Ok(match selector {
            Selector::Loop => self.loop_obligations(label, zeta)?,
            Selector::Gamma => vec![self.gamma_obligation(label, zeta)?],
            Selector::Rho => vec![self.rho_obligation(label, zeta)?],
            Selector::Exploit => vec![self.exploit_witness(label, zeta)?],
            Selector::Chi => vec![self.chi_obligation(label, zeta)?.0],
            Selector::NotChi => vec![self.chi_obligation(label, zeta)?.1],
            Selector::Psi => {
                let (var, term) = instantiation.ok_or(ObligationError::MissingInstantiation)?;
                vec![self.psi_obligation(label, zeta, var, term)?]
            }
            Selector::Friendly => vec![self.friendliness_probe()?],
            Selector::All => {
                let mut out = self.loop_obligations(label, zeta)?;
                let (chi, not_chi) = self.chi_obligation(label, zeta)?;
                if self.model.relation.is_some() {
                    out.push(self.rho_obligation(label, zeta)?);
                    out.push(self.exploit_witness(label, zeta)?);
                }
                out.push(chi);
                out.push(not_chi);
                if let Some((var, term)) = instantiation {
                    out.push(self.psi_obligation(label, zeta, var, term)?);
                }
                if self.model.relation.is_some() {
                    out.push(self.friendliness_probe()?);
                }
                out
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_fol, parse_model_with_fragments, parse_term};

    fn model(name: &str) -> Model {
        let text = match name {
            "m2" => include_str!("../../../models/m2.hpmodel"),
            "m3" => include_str!("../../../models/m3.hpmodel"),
            _ => include_str!("../../../models/m4.hpmodel"),
        };
        parse_model_with_fragments(text, &[include_str!("../../../models/invariants.hpfrag")]).unwrap()
    }

    #[test]
    fn loop_branches() {
        let m = model("m2");
        let g = Generator::new(&m, ObligationSettings::default()).unwrap();
        let zeta = g.invariant("zeta1").unwrap();
        let obs = g.loop_obligations("zeta1", zeta).unwrap();
        assert_eq!(obs.len(), 3);
        assert!(obs.iter().all(|o| o.kind == ObligationKind::FalsifyUniversal));
        // Branch (iii) is x <= xc -> x <= xc under the constant conjuncts.
        let expected = parse_fol(
            "forall x forall xc (asmin > 0 & anmax > 0 & anmin > 0 & asmin > anmin & T > 0 & x <= xc -> x <= xc)",
        )
        .unwrap();
        assert_eq!(obs[2].formula, DlFormula::Lifted(expected));
        assert_eq!(obs[2].search_box, vec![("x".into(), SearchRange::interval(-1, 5)), ("xc".into(), SearchRange::interval(-1, 10))]);
        // Branch (ii) quantifies over what the loop body reads.
        let vars: Vec<&str> = obs[1].search_box.iter().map(|(v, _)| v.as_str()).collect();
        assert_eq!(vars, vec!["x", "v", "xc"]);
        assert_eq!(obs[1].fixed_constants.len(), 4);
        let a = obs[1].search_box.iter().find(|(v, _)| v == "x").unwrap();
        assert_eq!(a.1, SearchRange::interval(-1, 5));
    }

    #[test]
    fn rho_and_exploit_shapes() {
        let m = model("m2");
        let g = Generator::new(&m, ObligationSettings::default()).unwrap();
        let zeta = g.invariant("zeta1").unwrap();
        let rho = g.rho_obligation("zeta1", zeta).unwrap();
        assert!(rho.text().contains("<xc := *;"), "{}", rho.text());
        assert!(rho.range("xc_next").is_some());
        let ex = g.exploit_witness("zeta1", zeta).unwrap();
        assert_eq!(ex.kind, ObligationKind::FindWitness);
        assert_eq!(ex.range("xc'"), Some(&SearchRange::interval(-1, 10)));
        assert!(ex.text().contains("x <= xc'"), "{}", ex.text());
        assert!(ex.text().contains("xc' <= xc"), "{}", ex.text());
        assert!(matches!(Generator::new(&parse_model_with_fragments(include_str!("../../../models/m2.hpmodel"), &[]).unwrap(), ObligationSettings::default()).unwrap().rho_obligation("z", zeta), Err(ObligationError::MissingRelation)));
    }

    #[test]
    fn chi_and_negation() {
        let m = model("m3");
        let g = Generator::new(&m, ObligationSettings::default()).unwrap();
        let zeta = g.invariant("zeta1").unwrap();
        let (chi, not_chi) = g.chi_obligation("zeta1", zeta).unwrap();
        assert_eq!(not_chi.kind, ObligationKind::FindWitness);
        assert!(matches!(not_chi.formula, DlFormula::Exists(..)));
        assert!(not_chi.text().contains("x > xc"), "{}", not_chi.text());
        assert_eq!(chi.search_box, not_chi.search_box);
        assert!(matches!(not_chi.formula, DlFormula::Exists(_, ref b) if b.has_modality()));
    }

    #[test]
    fn psi_instantiation() {
        let m = model("m4");
        let g = Generator::new(&m, ObligationSettings::default()).unwrap();
        let zi = g.invariant("zeta_iter").unwrap();
        let psi = g.psi_obligation("zeta_iter", zi, "a", &parse_term("-anmin").unwrap()).unwrap();
        assert_eq!(psi.kind, ObligationKind::FindWitness);
        let vars: Vec<&str> = psi.search_box.iter().map(|(v, _)| v.as_str()).collect();
        assert_eq!(vars, vec!["x", "v", "xc"]);
        assert_eq!(g.psi_obligation("z", zi, "q", &Term::int(0)), Err(ObligationError::NotFree("q".into())));
    }

    #[test]
    fn settings_override_constants_and_boxes() {
        let m = model("m2");
        let settings = ObligationSettings {
            constants: BTreeMap::from([("T".to_string(), BigRational::from_integer(2.into()))]),
            boxes: BTreeMap::from([("x".to_string(), SearchRange::interval(0, 1))]),
            search_constants: false,
        };
        let g = Generator::new(&m, settings).unwrap();
        let o = g.loop_obligations("zeta1", g.invariant("zeta1").unwrap()).unwrap().remove(2);
        assert_eq!(o.range("x"), Some(&SearchRange::interval(0, 1)));
        assert_eq!(o.fixed_constants["T"], BigRational::from_integer(2.into()));
        let bad = ObligationSettings { constants: BTreeMap::from([("Q".to_string(), BigRational::zero())]), ..Default::default() };
        assert!(Generator::new(&m, bad).is_err());
        let searching = Generator::new(&m, ObligationSettings { search_constants: true, ..Default::default() }).unwrap();
        let o = searching.loop_obligations("zeta1", searching.invariant("zeta1").unwrap()).unwrap().remove(2);
        assert!(o.fixed_constants.is_empty());
        assert_eq!(o.range("anmin"), Some(&SearchRange::Interval { lo: BigRational::new(3.into(), 2.into()), hi: BigRational::from_integer(6.into()) }));
    }

    #[test]
    fn catalog_json() {
        let m = model("m2");
        let g = Generator::new(&m, ObligationSettings::default()).unwrap();
        let o = g.friendliness_probe().unwrap();
        let json = serde_json::to_value(&o).unwrap();
        assert_eq!(json["kind"], "FindWitness");
        assert_eq!(json["box"]["xc_next"], "[-1, 10]");
        assert_eq!(json["constants"]["anmin"], "3");
    }

    #[test]
    fn selector_names() {
        assert_eq!("not-chi".parse::<Selector>(), Ok(Selector::NotChi));
        assert!("bogus".parse::<Selector>().is_err());
    }
}
