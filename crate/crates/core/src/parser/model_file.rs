//! Sectioned model files (`.hpmodel`) and invariant fragments (`.hpfrag`).
//!
//! A section starts with an uppercase keyword at column 0 and runs until the
//! next keyword line. `INVARIANT` takes a name and `RELATION` takes the env
//! variable and its successor name on the header line.

use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::{constant_value, print_term, ParseError, Parser, SourceSpan};
use crate::ast::{CmpOp, FolFormula, FreeVariables, HybridProgram, Term};
use crate::model::{detect_shape, ConstantDecl, Domain, Model, Relation};

type PResult<T> = Result<T, ParseError>;

const SECTIONS: &[&str] = &["CONSTANTS", "DOMAINS", "INIT", "GUARANTEE", "ENV", "AUX", "CTRL", "PLANT", "INVARIANT", "RELATION"];
const FRAGMENT_SECTIONS: &[&str] = &["DOMAINS", "INVARIANT", "RELATION"];
const MANDATORY: &[&str] = &["CONSTANTS", "INIT", "GUARANTEE", "ENV", "AUX", "CTRL", "PLANT"];

/// Bound used for variables that need a search box but have no domain.
pub const DEFAULT_BOUND: i64 = 100;

struct Section<'a> {
    keyword: &'static str,
    args: &'a str,
    args_at: usize,
    body: &'a str,
    body_at: usize,
    header: SourceSpan,
}

fn split_sections(doc: &str) -> PResult<Vec<Section<'_>>> {
    let mut sections: Vec<Section> = Vec::new();
    let mut offset = 0;
    for line in doc.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        let word_len = content.find(|c: char| !c.is_ascii_alphanumeric() && c != '_').unwrap_or(content.len());
        let word = &content[..word_len];
        let header = !word.is_empty() && word.starts_with(|c: char| c.is_ascii_uppercase()) && word == word.to_ascii_uppercase();
        if header {
            let span = SourceSpan::locate(doc, start, start + word_len);
            let keyword = SECTIONS
                .iter()
                .find(|k| **k == word)
                .ok_or_else(|| ParseError::new(format!("unknown section `{word}`"), span))?;
            if let Some(prev) = sections.last_mut() {
                prev.body = &doc[prev.body_at..start];
            }
            sections.push(Section {
                keyword,
                args: &content[word_len..],
                args_at: start + word_len,
                body: "",
                body_at: offset,
                header: span,
            });
        } else if sections.is_empty() {
            let trimmed = content.trim_start();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                let at = start + (content.len() - trimmed.len());
                return Err(ParseError::new("expected a section keyword", SourceSpan::locate(doc, at, at + trimmed.len())));
            }
        }
    }
    if let Some(prev) = sections.last_mut() {
        prev.body = &doc[prev.body_at..];
    }
    Ok(sections)
}

struct Located<T> {
    value: T,
    span: SourceSpan,
}

/// Contents of a fragment file: extra domains, invariants and a relation.
pub struct Fragment {
    domains: Vec<Located<(String, Domain)>>,
    invariants: Vec<Located<(String, FolFormula)>>,
    relation: Option<Located<Relation>>,
    label: String,
}

impl Fragment {
    pub fn invariant_names(&self) -> Vec<&str> {
        self.invariants.iter().map(|i| i.value.0.as_str()).collect()
    }
}

#[derive(Default)]
struct Parts {
    constants: Vec<Located<(String, Term)>>,
    domains: Vec<Located<(String, Domain)>>,
    init: Option<Located<FolFormula>>,
    guarantee: Option<Located<FolFormula>>,
    env: Option<Located<HybridProgram>>,
    aux: Option<Located<HybridProgram>>,
    ctrl: Option<Located<HybridProgram>>,
    plant: Option<Located<HybridProgram>>,
    invariants: Vec<Located<(String, FolFormula)>>,
    relation: Option<Located<Relation>>,
    has_constants: bool,
}

fn whole_section<T>(doc: &str, s: &Section, f: impl FnOnce(&mut Parser) -> PResult<T>) -> PResult<Located<T>> {
    let mut p = Parser::new(doc, s.body_at, s.body)?;
    if p.at_eof() {
        return Err(ParseError::new(format!("empty {} section", s.keyword), s.header));
    }
    let value = f(&mut p)?;
    p.expect_eof()?;
    let span = p.span_from(0);
    Ok(Located { value, span })
}

fn header_args(doc: &str, s: &Section, count: usize) -> PResult<Vec<String>> {
    let mut p = Parser::new(doc, s.args_at, s.args)?;
    let mut names = Vec::new();
    for _ in 0..count {
        names.push(p.ident()?);
    }
    p.expect_eof()?;
    Ok(names)
}

fn domain_entries(p: &mut Parser) -> PResult<Vec<Located<(String, Domain)>>> {
    use super::lexer::Tok;
    let mut out = Vec::new();
    while !p.at_eof() {
        let start = p.position();
        let name = p.ident()?;
        if p.peek_ident() != Some("in") {
            return Err(p.error_expected("`in`"));
        }
        p.ident()?;
        let domain = if p.eat_tok(Tok::LBracket) {
            let lo = p.term()?;
            p.expect_tok(Tok::Comma)?;
            let hi = p.term()?;
            p.expect_tok(Tok::RBracket)?;
            Domain::Interval { lo, hi }
        } else if p.eat_tok(Tok::LBrace) {
            let mut values = vec![p.term()?];
            while p.eat_tok(Tok::Comma) {
                values.push(p.term()?);
            }
            p.expect_tok(Tok::RBrace)?;
            Domain::Finite(values)
        } else {
            return Err(p.error_expected("`[` or `{`"));
        };
        out.push(Located { value: (name, domain), span: p.span_from(start) });
        p.eat_tok(Tok::Comma);
    }
    Ok(out)
}

fn constant_entries(p: &mut Parser) -> PResult<Vec<Located<(String, Term)>>> {
    use super::lexer::Tok;
    let mut out = Vec::new();
    while !p.at_eof() {
        let start = p.position();
        let name = p.ident()?;
        p.expect_tok(Tok::Eq)?;
        let value = p.term()?;
        out.push(Located { value: (name, value), span: p.span_from(start) });
        p.eat_tok(Tok::Comma);
    }
    Ok(out)
}

fn set_once<T>(slot: &mut Option<Located<T>>, value: Located<T>, s: &Section) -> PResult<()> {
    if slot.is_some() {
        return Err(ParseError::new(format!("duplicate {} section", s.keyword), s.header));
    }
    *slot = Some(value);
    Ok(())
}

fn parse_parts(doc: &str, allowed: &[&str]) -> PResult<Parts> {
    let mut parts = Parts::default();
    let mut seen_domains = false;
    for s in split_sections(doc)? {
        if !allowed.contains(&s.keyword) {
            return Err(ParseError::new(format!("section {} is not allowed here", s.keyword), s.header));
        }
        if !matches!(s.keyword, "INVARIANT" | "RELATION") {
            header_args(doc, &s, 0)?;
        }
        match s.keyword {
            "CONSTANTS" => {
                if std::mem::replace(&mut parts.has_constants, true) {
                    return Err(ParseError::new("duplicate CONSTANTS section", s.header));
                }
                let mut p = Parser::new(doc, s.body_at, s.body)?;
                parts.constants = constant_entries(&mut p)?;
            }
            "DOMAINS" => {
                if std::mem::replace(&mut seen_domains, true) {
                    return Err(ParseError::new("duplicate DOMAINS section", s.header));
                }
                let mut p = Parser::new(doc, s.body_at, s.body)?;
                parts.domains = domain_entries(&mut p)?;
            }
            "INIT" => set_once(&mut parts.init, whole_section(doc, &s, |p| p.fol())?, &s)?,
            "GUARANTEE" => set_once(&mut parts.guarantee, whole_section(doc, &s, |p| p.fol())?, &s)?,
            "ENV" => set_once(&mut parts.env, whole_section(doc, &s, |p| p.program())?, &s)?,
            "AUX" => set_once(&mut parts.aux, whole_section(doc, &s, |p| p.program())?, &s)?,
            "CTRL" => set_once(&mut parts.ctrl, whole_section(doc, &s, |p| p.program())?, &s)?,
            "PLANT" => set_once(&mut parts.plant, whole_section(doc, &s, |p| p.program())?, &s)?,
            "INVARIANT" => {
                let name = header_args(doc, &s, 1)?.remove(0);
                let f = whole_section(doc, &s, |p| p.fol())?;
                parts.invariants.push(Located { value: (name, f.value), span: f.span });
            }
            "RELATION" => {
                let mut names = header_args(doc, &s, 2)?;
                let successor = names.pop().unwrap_or_default();
                let env_var = names.pop().unwrap_or_default();
                let f = whole_section(doc, &s, |p| p.fol())?;
                let rel = Located { value: Relation { env_var, successor, formula: f.value }, span: f.span };
                set_once(&mut parts.relation, rel, &s)?;
            }
            _ => unreachable!("keyword list is closed"),
        }
    }
    Ok(parts)
}

/// Parse an invariant fragment. Only DOMAINS, INVARIANT and RELATION are
/// allowed; names are resolved when the fragment is merged into a model.
pub fn parse_fragment(text: &str) -> Result<Fragment, ParseError> {
    let parts = parse_parts(text, FRAGMENT_SECTIONS)?;
    Ok(Fragment { domains: parts.domains, invariants: parts.invariants, relation: parts.relation, label: String::new() })
}

pub fn parse_model(text: &str) -> Result<Model, ParseError> {
    parse_model_with_fragments(text, &[])
}

/// Parse a model and merge fragments into it. Errors raised while
/// validating fragment content carry spans into the fragment text and a
/// `fragment N:` message prefix.
pub fn parse_model_with_fragments(text: &str, fragments: &[&str]) -> Result<Model, ParseError> {
    let mut parts = parse_parts(text, SECTIONS)?;
    let mut frags = Vec::new();
    for (i, frag) in fragments.iter().enumerate() {
        let mut f = parse_fragment(frag).map_err(|e| ParseError::new(format!("fragment {}: {}", i + 1, e.message), e.span))?;
        f.label = format!("fragment {}: ", i + 1);
        frags.push(f);
    }
    build(text, &mut parts, frags)
}

fn missing(doc: &str, keyword: &str) -> ParseError {
    ParseError::new(format!("missing {keyword} section"), SourceSpan::locate(doc, doc.len(), doc.len()))
}

fn err(label: &str, message: String, span: SourceSpan) -> ParseError {
    ParseError::new(format!("{label}{message}"), span)
}

fn build(doc: &str, parts: &mut Parts, fragments: Vec<Fragment>) -> PResult<Model> {
    let labelled = |label: &str, items: Vec<Located<(String, Domain)>>| -> Vec<(String, Located<(String, Domain)>)> {
        items.into_iter().map(|d| (label.to_string(), d)).collect()
    };
    for keyword in MANDATORY {
        let present = match *keyword {
            "CONSTANTS" => parts.has_constants,
            "INIT" => parts.init.is_some(),
            "GUARANTEE" => parts.guarantee.is_some(),
            "ENV" => parts.env.is_some(),
            "AUX" => parts.aux.is_some(),
            "CTRL" => parts.ctrl.is_some(),
            _ => parts.plant.is_some(),
        };
        if !present {
            return Err(missing(doc, keyword));
        }
    }
    let (init, guarantee) = (parts.init.take().unwrap(), parts.guarantee.take().unwrap());
    let (env, aux) = (parts.env.take().unwrap(), parts.aux.take().unwrap());
    let (ctrl, plant) = (parts.ctrl.take().unwrap(), parts.plant.take().unwrap());

    // Constants.
    let mut constants: Vec<ConstantDecl> = Vec::new();
    for c in &parts.constants {
        let (name, term) = &c.value;
        if constants.iter().any(|d| &d.name == name) {
            return Err(ParseError::new(format!("duplicate constant `{name}`"), c.span));
        }
        let value = constant_value(term)
            .ok_or_else(|| ParseError::new(format!("value of constant `{name}` is not a closed numeric term"), c.span))?;
        constants.push(ConstantDecl { name: name.clone(), value });
    }
    let constant_names: BTreeSet<String> = constants.iter().map(|c| c.name.clone()).collect();

    // Fragments.
    let mut domains = labelled("", std::mem::take(&mut parts.domains));
    let mut invariants: Vec<(String, Located<(String, FolFormula)>)> =
        std::mem::take(&mut parts.invariants).into_iter().map(|i| (String::new(), i)).collect();
    let mut relation = parts.relation.take().map(|r| (String::new(), r));
    for frag in fragments {
        domains.extend(labelled(&frag.label, frag.domains));
        invariants.extend(frag.invariants.into_iter().map(|i| (frag.label.clone(), i)));
        if let Some(r) = frag.relation {
            if relation.is_some() {
                return Err(err(&frag.label, "duplicate RELATION section".into(), r.span));
            }
            relation = Some((frag.label.clone(), r));
        }
    }

    // Variable order: domain order, then first occurrence.
    let mut order: Vec<String> = domains.iter().map(|(_, d)| d.value.0.clone()).collect();
    let mut seen = Vec::new();
    init.value.push_vars(&mut seen);
    guarantee.value.push_vars(&mut seen);
    for p in [&env.value, &aux.value, &ctrl.value, &plant.value] {
        p.push_vars(&mut seen);
    }
    for (_, inv) in &invariants {
        inv.value.1.push_vars(&mut seen);
    }
    if let Some((_, r)) = &relation {
        seen.push(r.value.env_var.clone());
        seen.push(r.value.successor.clone());
        r.value.formula.push_vars(&mut seen);
    }
    let mut bound_names = BTreeSet::new();
    init.value.collect_bound(&mut bound_names);
    guarantee.value.collect_bound(&mut bound_names);
    for (_, inv) in &invariants {
        inv.value.1.collect_bound(&mut bound_names);
    }
    if let Some((_, r)) = &relation {
        r.value.formula.collect_bound(&mut bound_names);
    }
    let mentioned: BTreeSet<String> = seen.iter().cloned().collect();
    for (label, d) in &domains {
        let name = &d.value.0;
        if !mentioned.contains(name) || constant_names.contains(name) {
            return Err(err(label, format!("unknown variable `{name}` in DOMAINS"), d.span));
        }
    }
    for name in seen {
        if !order.contains(&name) && !constant_names.contains(&name) && !bound_names.contains(&name) {
            order.push(name);
        }
    }
    order.retain(|n| !constant_names.contains(n));

    // Domains.
    let mut domain_list: Vec<(String, Domain)> = Vec::new();
    for (label, d) in &domains {
        let (name, domain) = &d.value;
        if domain_list.iter().any(|(n, _)| n == name) {
            return Err(err(label, format!("duplicate domain for `{name}`"), d.span));
        }
        let bounds: Vec<&Term> = match domain {
            Domain::Interval { lo, hi } => vec![lo, hi],
            Domain::Finite(values) => values.iter().collect(),
        };
        for b in &bounds {
            if let Some(v) = b.free_variables().into_iter().find(|v| !constant_names.contains(v)) {
                return Err(err(label, format!("domain bound of `{name}` mentions non-constant `{v}`"), d.span));
            }
        }
        let values: Option<Vec<BigRational>> = bounds.iter().map(|b| constant_value(&close(b, &constants))).collect();
        let values = values.ok_or_else(|| err(label, format!("domain bound of `{name}` is undefined"), d.span))?;
        if let (Domain::Interval { .. }, [lo, hi]) = (domain, values.as_slice()) {
            if lo > hi {
                return Err(err(label, format!("empty domain for `{name}`"), d.span));
            }
        }
        domain_list.push((name.clone(), domain.clone()));
    }

    // Programs must not write constants.
    for (section, p) in [("ENV", &env), ("AUX", &aux), ("CTRL", &ctrl), ("PLANT", &plant)] {
        if let Some(c) = p.value.may_bound().into_iter().find(|v| constant_names.contains(v)) {
            return Err(ParseError::new(format!("{section} writes constant `{c}`"), p.span));
        }
    }

    // Divisors need a known sign.
    let signs = SignFacts::from_init(&init.value, &constant_names);
    let mut checks: Vec<(String, SourceSpan, Vec<Term>)> = Vec::new();
    let mut collect = |label: &str, span: SourceSpan, visit: &dyn Fn(&mut dyn FnMut(&Term))| {
        let mut terms = Vec::new();
        visit(&mut |t: &Term| terms.push(t.clone()));
        checks.push((label.to_string(), span, terms));
    };
    collect("", init.span, &|f| init.value.visit_terms(f));
    collect("", guarantee.span, &|f| guarantee.value.visit_terms(f));
    for p in [&env, &aux, &ctrl, &plant] {
        collect("", p.span, &|f| p.value.visit_terms(f));
    }
    for (label, inv) in &invariants {
        collect(label, inv.span, &|f| inv.value.1.visit_terms(f));
    }
    if let Some((label, r)) = &relation {
        collect(label, r.span, &|f| r.value.formula.visit_terms(f));
    }
    for (label, d) in &domains {
        let terms: Vec<Term> = match &d.value.1 {
            Domain::Interval { lo, hi } => vec![lo.clone(), hi.clone()],
            Domain::Finite(values) => values.clone(),
        };
        checks.push((label.clone(), d.span, terms));
    }
    for (label, span, terms) in &checks {
        for t in terms {
            let mut problem = None;
            t.visit(&mut |sub| {
                if let Term::Div(_, divisor) = sub {
                    if problem.is_none() && !signs.sign(divisor).is_nonzero() {
                        problem = Some(match constant_value(divisor) {
                            Some(v) if v.is_zero() => "division by zero".to_string(),
                            _ => format!("unconstrained divisor {}", print_term(divisor)),
                        });
                    }
                }
            });
            if let Some(message) = problem {
                return Err(err(label, message, *span));
            }
        }
    }

    // Constant values must satisfy the constant conjuncts of init.
    let names_and_consts = constant_names.clone();
    for c in init.value.conjuncts() {
        let fv = c.free_variables();
        if fv.is_empty() || !fv.is_subset(&names_and_consts) {
            continue;
        }
        if closed_truth(&close_formula(c, &constants)) == Some(false) {
            return Err(ParseError::new(format!("constant values violate `{c}`"), init.span));
        }
    }

    // Invariants and relation.
    let mut invariant_list: Vec<(String, FolFormula)> = Vec::new();
    for (label, inv) in &invariants {
        let (name, f) = &inv.value;
        if invariant_list.iter().any(|(n, _)| n == name) {
            return Err(err(label, format!("duplicate invariant `{name}`"), inv.span));
        }
        invariant_list.push((name.clone(), f.clone()));
    }
    let mut warnings = Vec::new();
    let relation = match relation {
        Some((label, r)) => {
            let rel = r.value;
            if !order.contains(&rel.env_var) {
                return Err(err(&label, format!("relation names unknown env variable `{}`", rel.env_var), r.span));
            }
            if constant_names.contains(&rel.successor) || rel.successor == rel.env_var {
                return Err(err(&label, format!("relation successor `{}` clashes with a declared name", rel.successor), r.span));
            }
            Some(rel)
        }
        None => None,
    };

    let shape = match detect_shape(&env.value, &aux.value, &ctrl.value, &plant.value, &constant_names) {
        Ok(shape) => {
            if let Some(rel) = &relation {
                if rel.env_var != shape.env_var {
                    warnings.push(format!("relation env variable `{}` is not the env variable `{}`", rel.env_var, shape.env_var));
                }
            }
            Some(shape)
        }
        Err(problems) => {
            warnings.extend(problems.into_iter().map(|p| format!("nonstandard shape: {p}")));
            None
        }
    };

    let model = Model {
        constants,
        domains: domain_list,
        init: init.value,
        guarantee: guarantee.value,
        env: env.value,
        aux: aux.value,
        ctrl: ctrl.value,
        plant: plant.value,
        invariants: invariant_list,
        relation,
        variables: order,
        shape,
        warnings,
    };
    let mut model = model;
    for v in needs_box(&model) {
        if model.domain(&v).is_none() {
            model.warnings.push(format!("no domain for `{v}`; searching [-{DEFAULT_BOUND}, {DEFAULT_BOUND}]"));
        }
    }
    Ok(model)
}

/// Variables whose initial value matters to some check and therefore need a
/// search box.
pub fn needs_box(model: &Model) -> Vec<String> {
    let mut read = model.loop_body().read_variables();
    read.extend(model.init.free_variables());
    read.extend(model.guarantee.free_variables());
    for (_, z) in &model.invariants {
        read.extend(z.free_variables());
    }
    if let Some(rel) = &model.relation {
        read.extend(rel.formula.free_variables());
        read.insert(rel.successor.clone());
    }
    model.variables.iter().filter(|v| read.contains(*v)).cloned().collect()
}

fn close(t: &Term, constants: &[ConstantDecl]) -> Term {
    constants.iter().fold(t.clone(), |t, c| t.substitute(&c.name, &Term::Const(c.value.clone())))
}

fn close_formula(f: &FolFormula, constants: &[ConstantDecl]) -> FolFormula {
    constants.iter().fold(f.clone(), |f, c| f.substitute(&c.name, &Term::Const(c.value.clone())))
}

fn closed_truth(f: &FolFormula) -> Option<bool> {
    Some(match f {
        FolFormula::True => true,
        FolFormula::False => false,
        FolFormula::Cmp(op, a, b) => op.holds(constant_value(a)?.cmp(&constant_value(b)?)),
        FolFormula::Not(a) => !closed_truth(a)?,
        FolFormula::And(a, b) => closed_truth(a)? && closed_truth(b)?,
        FolFormula::Or(a, b) => closed_truth(a)? || closed_truth(b)?,
        FolFormula::Implies(a, b) => !closed_truth(a)? || closed_truth(b)?,
        FolFormula::Iff(a, b) => closed_truth(a)? == closed_truth(b)?,
        FolFormula::Forall(..) | FolFormula::Exists(..) => return None,
    })
}

trait CollectBound {
    fn collect_bound(&self, out: &mut BTreeSet<String>);
}

impl CollectBound for FolFormula {
    fn collect_bound(&self, out: &mut BTreeSet<String>) {
        match self {
            FolFormula::True | FolFormula::False | FolFormula::Cmp(..) => {}
            FolFormula::Not(a) => a.collect_bound(out),
            FolFormula::And(a, b) | FolFormula::Or(a, b) | FolFormula::Implies(a, b) | FolFormula::Iff(a, b) => {
                a.collect_bound(out);
                b.collect_bound(out);
            }
            FolFormula::Forall(v, body) | FolFormula::Exists(v, body) => {
                out.insert(v.clone());
                body.collect_bound(out);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sign {
    Pos,
    Neg,
    Zero,
    NonNeg,
    NonPos,
    Unknown,
}

impl Sign {
    fn is_nonzero(self) -> bool {
        matches!(self, Sign::Pos | Sign::Neg)
    }

    fn of(value: &BigRational) -> Sign {
        if value.is_zero() {
            Sign::Zero
        } else if value.is_positive() {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    fn negate(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
            Sign::NonNeg => Sign::NonPos,
            Sign::NonPos => Sign::NonNeg,
            s => s,
        }
    }

    fn times(self, other: Sign) -> Sign {
        use Sign::*;
        match (self, other) {
            (Zero, _) | (_, Zero) => Zero,
            (Unknown, _) | (_, Unknown) => Unknown,
            (Pos, s) | (s, Pos) => s,
            (Neg, s) | (s, Neg) => s.negate(),
            (NonNeg, NonNeg) | (NonPos, NonPos) => NonNeg,
            (NonNeg, NonPos) | (NonPos, NonNeg) => NonPos,
        }
    }

    fn plus(self, other: Sign) -> Sign {
        use Sign::*;
        match (self, other) {
            (Zero, s) | (s, Zero) => s,
            (Pos, Pos) | (Pos, NonNeg) | (NonNeg, Pos) => Pos,
            (Neg, Neg) | (Neg, NonPos) | (NonPos, Neg) => Neg,
            (NonNeg, NonNeg) => NonNeg,
            (NonPos, NonPos) => NonPos,
            _ => Unknown,
        }
    }
}

/// Signs of constants as stated by comparisons against literals in `init`.
struct SignFacts {
    known: Vec<(String, Sign)>,
}

impl SignFacts {
    fn from_init(init: &FolFormula, constants: &BTreeSet<String>) -> SignFacts {
        let mut known: Vec<(String, Sign)> = Vec::new();
        for c in init.conjuncts() {
            let FolFormula::Cmp(op, lhs, rhs) = c else { continue };
            let (name, op, k) = match (lhs, rhs) {
                (Term::Var(v), Term::Const(k)) => (v, *op, k),
                (Term::Const(k), Term::Var(v)) => (v, op.flipped(), k),
                _ => continue,
            };
            if !constants.contains(name) {
                continue;
            }
            let sign = match op {
                CmpOp::Gt if !k.is_negative() => Sign::Pos,
                CmpOp::Ge | CmpOp::Eq if k.is_positive() => Sign::Pos,
                CmpOp::Lt if !k.is_positive() => Sign::Neg,
                CmpOp::Le | CmpOp::Eq if k.is_negative() => Sign::Neg,
                CmpOp::Ge if k.is_zero() => Sign::NonNeg,
                CmpOp::Le if k.is_zero() => Sign::NonPos,
                CmpOp::Ne if k.is_zero() => Sign::Unknown,
                _ => continue,
            };
            match known.iter_mut().find(|(n, _)| n == name) {
                Some((_, s)) if !s.is_nonzero() => *s = sign,
                Some(_) => {}
                None => known.push((name.clone(), sign)),
            }
        }
        SignFacts { known }
    }

    fn sign(&self, t: &Term) -> Sign {
        match t {
            Term::Const(c) => Sign::of(c),
            Term::Var(v) => self.known.iter().find(|(n, _)| n == v).map_or(Sign::Unknown, |(_, s)| *s),
            Term::Neg(a) => self.sign(a).negate(),
            Term::Add(a, b) => self.sign(a).plus(self.sign(b)),
            Term::Sub(a, b) => self.sign(a).plus(self.sign(b).negate()),
            Term::Mul(a, b) | Term::Div(a, b) => self.sign(a).times(self.sign(b)),
            Term::Pow(_, 0) => Sign::Pos,
            Term::Pow(a, n) => {
                let s = self.sign(a);
                if n % 2 == 1 {
                    s
                } else if s.is_nonzero() {
                    Sign::Pos
                } else if s == Sign::Zero {
                    Sign::Zero
                } else {
                    Sign::NonNeg
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# a small model
CONSTANTS
  T = 1, b = 2
DOMAINS
  x in [0, 10]
  v in [0, 2*T]
INIT
  x = 0 & v = 0 & T > 0 & b > 0
GUARANTEE
  x <= 10
ENV
  e := *; ?(e >= x)
AUX
  a := *; ?(a <= b)
CTRL
  if (!(e - x >= v*T)) { a := *; ?(a = -b) }
PLANT
  tau := 0; {x' = v, v' = a, tau' = 1 & v >= 0 & tau <= T}
INVARIANT zeta
  x <= e
";

    #[test]
    fn small_model_loads() {
        let m = parse_model(SMALL).unwrap();
        assert_eq!(m.constants.len(), 2);
        assert_eq!(m.variables[..2], ["x".to_string(), "v".to_string()]);
        assert!(m.variables.contains(&"tau".to_string()));
        assert!(!m.nonstandard_shape());
        assert_eq!(m.invariant("zeta").unwrap().to_string(), "x <= e");
        assert!(m.warnings.iter().any(|w| w.contains("`e`")), "{:?}", m.warnings);
    }

    #[test]
    fn degenerate_controller_is_flagged() {
        let text = SMALL.replace("if (!(e - x >= v*T)) { a := *; ?(a = -b) }", "?true");
        let m = parse_model(&text).unwrap();
        assert!(m.nonstandard_shape());
        assert_eq!(m.ctrl, HybridProgram::Test(FolFormula::True));
    }

    #[test]
    fn unconstrained_divisor_rejected() {
        let text = SMALL.replace("& b > 0", "").replace("?(a <= b)", "?(a/b <= 1)");
        let e = parse_model(&text).unwrap_err();
        assert_eq!(e.message, "unconstrained divisor b");
        let ok = SMALL.replace("?(a <= b)", "?(a/(2*b^2) <= 1)");
        assert!(parse_model(&ok).is_ok());
        let state = SMALL.replace("?(a <= b)", "?(a/x <= 1)");
        assert_eq!(parse_model(&state).unwrap_err().message, "unconstrained divisor x");
    }

    #[test]
    fn structural_errors() {
        let dup = SMALL.replace("GUARANTEE\n  x <= 10\n", "GUARANTEE\n  x <= 10\nGUARANTEE\n  x <= 9\n");
        assert_eq!(parse_model(&dup).unwrap_err().message, "duplicate GUARANTEE section");
        let missing = SMALL.replace("GUARANTEE\n  x <= 10\n", "");
        assert_eq!(parse_model(&missing).unwrap_err().message, "missing GUARANTEE section");
        let unknown = SMALL.replace("  v in [0, 2*T]", "  v in [0, 2*T]\n  q in [0, 1]");
        let e = parse_model(&unknown).unwrap_err();
        assert_eq!(e.message, "unknown variable `q` in DOMAINS");
        assert_eq!(&unknown[e.span.start..e.span.end], "q in [0, 1]");
        let writes = SMALL.replace("e := *;", "T := 2; e := *;");
        assert!(parse_model(&writes).unwrap_err().message.contains("writes constant `T`"));
        let bad = SMALL.replace("x <= 10", "x <= ");
        let e = parse_model(&bad).unwrap_err();
        assert!(e.span.start <= bad.len());
        let stray = format!("hello\n{SMALL}");
        assert_eq!(parse_model(&stray).unwrap_err().message, "expected a section keyword");
    }

    #[test]
    fn fragments_merge() {
        let frag = "DOMAINS\n  n in [0, 1]\nINVARIANT zeta2\n  v <= 2\nRELATION e n\n  e <= n\n";
        let m = parse_model_with_fragments(SMALL, &[frag]).unwrap();
        assert_eq!(m.invariants.len(), 2);
        assert_eq!(m.relation.as_ref().unwrap().successor, "n");
        assert!(m.variables.contains(&"n".to_string()));
        let dup = "INVARIANT zeta\n  v <= 2\n";
        let e = parse_model_with_fragments(SMALL, &[dup]).unwrap_err();
        assert_eq!(e.message, "fragment 1: duplicate invariant `zeta`");
        assert!(parse_fragment("ENV\n  e := *\n").is_err());
    }

    #[test]
    fn constant_values_must_satisfy_init() {
        let text = SMALL.replace("T = 1", "T = 0");
        assert!(parse_model(&text).unwrap_err().message.contains("violate"));
    }
}
