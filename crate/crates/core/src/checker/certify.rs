//! Exact re-validation of counterexamples and witnesses.
//!
//! The certifier walks the obligation's formula tree, not the compiled form
//! the search used. Executions are replayed with `semantics::run_with`;
//! modalities that must hold on every execution are enumerated by a small
//! interpreter of their own.

use super::explore::Evidence;
use super::form::matrix;
use super::Counterexample;
use crate::ast::{CmpOp, DlFormula, FolFormula, FreeVariables, HybridProgram, Term};
use crate::obligations::{negate_fol, Obligation, SearchRange};
use crate::parser::print_fol;
use crate::real::{Real, Scalar};
use crate::semantics::{eval_term, run_with, ChoiceScript, Compiler, Decision, OdeOptions, Outcome, Side, State, Trace};

/// What a successful certification established.
#[derive(Clone, Debug)]
pub struct Certificate {
    /// No floating-point value took part.
    pub exact: bool,
    /// Scripts in evaluation order.
    pub scripts: Vec<ChoiceScript>,
    /// The last first-order formula checked and the truth value it had.
    pub innermost: Option<(String, bool)>,
    /// Trace of the first replayed execution.
    pub trace: Option<Trace<Real>>,
}

/// True iff the counterexample re-validates against the obligation.
pub fn certify(cx: &Counterexample, ob: &Obligation) -> bool {
    certify_detailed(cx, ob).is_ok()
}

pub fn certify_detailed(cx: &Counterexample, ob: &Obligation) -> Result<Certificate, String> {
    let f = matrix(ob).map_err(|e| e.to_string())?;
    let state = initial_state(cx, ob)?;
    let want = ob.kind == crate::obligations::ObligationKind::FindWitness;
    let mut c = Certifier { ob, ode: &cx.ode, cert: Certificate { exact: state.is_exact(), scripts: Vec::new(), innermost: None, trace: None } };
    c.walk(&f, want, &state, &cx.evidence)?;
    Ok(c.cert)
}

fn initial_state(cx: &Counterexample, ob: &Obligation) -> Result<State<Real>, String> {
    let vars = ob.variables.clone();
    let mut values = vec![Real::from_int(0); vars.len()];
    for (name, v) in &ob.fixed_constants {
        if let Some(s) = vars.slot(name) {
            values[s] = Real::Exact(v.clone());
        }
    }
    for (name, range) in &ob.search_box {
        let (_, v) = cx.assignment.iter().find(|(n, _)| n == name).ok_or_else(|| format!("assignment lacks `{name}`"))?;
        if let Some(r) = v.as_rational() {
            if !range.contains(r) {
                return Err(format!("`{name}` = {v} lies outside {range}"));
            }
        }
        values[vars.slot(name).ok_or_else(|| format!("unknown variable `{name}`"))?] = v.clone();
    }
    for (name, v) in &cx.assignment {
        if let Some(fixed) = ob.fixed_constants.get(name) {
            if v.as_rational() != Some(fixed) {
                return Err(format!("constant `{name}` is {v}, expected {fixed}"));
            }
        }
    }
    Ok(State::new(vars, values))
}

struct Certifier<'a> {
    ob: &'a Obligation,
    ode: &'a OdeOptions,
    cert: Certificate,
}

impl Certifier<'_> {
    fn judge(&mut self, g: &FolFormula, st: &State<Real>) -> Result<Option<bool>, String> {
        let c = Compiler::new(st.vars(), self.ode).cond(g).map_err(|e| e.to_string())?;
        let j = c.judge(st.values()).map_err(|e| e.to_string())?;
        if !st.is_exact() {
            self.cert.exact = false;
        }
        Ok(j.truth)
    }

    fn walk(&mut self, f: &DlFormula, want: bool, st: &State<Real>, ev: &Evidence) -> Result<(), String> {
        match (f, ev) {
            (DlFormula::Lifted(g), Evidence::Atom) => {
                let truth = self.judge(g, st)?;
                self.cert.innermost = Some((print_fol(g), want));
                match truth {
                    Some(t) if t == want => Ok(()),
                    Some(_) => Err(format!("`{}` is not {want}", print_fol(g))),
                    None => Err(format!("`{}` is undecided", print_fol(g))),
                }
            }
            (DlFormula::Not(a), _) => self.walk(a, !want, st, ev),
            (DlFormula::And(x, y), Evidence::Both(a, b)) if want => self.both(x, true, a, y, true, b, st),
            (DlFormula::Or(x, y), Evidence::Both(a, b)) if !want => self.both(x, false, a, y, false, b, st),
            (DlFormula::Implies(x, y), Evidence::Both(a, b)) if !want => self.both(x, true, a, y, false, b, st),
            (DlFormula::And(x, _), Evidence::Left(a)) if !want => self.walk(x, false, st, a),
            (DlFormula::And(_, y), Evidence::Right(b)) if !want => self.walk(y, false, st, b),
            (DlFormula::Or(x, _), Evidence::Left(a)) if want => self.walk(x, true, st, a),
            (DlFormula::Or(_, y), Evidence::Right(b)) if want => self.walk(y, true, st, b),
            (DlFormula::Implies(x, _), Evidence::Left(a)) if want => self.walk(x, false, st, a),
            (DlFormula::Implies(_, y), Evidence::Right(b)) if want => self.walk(y, true, st, b),
            (DlFormula::Box(p, post), Evidence::Modal { script, post: pe }) if !want => self.execution(p, post, want, st, script, pe),
            (DlFormula::Diamond(p, post), Evidence::Modal { script, post: pe }) if want => self.execution(p, post, want, st, script, pe),
            (DlFormula::Box(p, post), Evidence::Decided { paths }) if want => self.every_execution(p, post, want, false, st, paths),
            (DlFormula::Diamond(p, post), Evidence::Decided { paths }) if !want => self.every_execution(p, post, want, true, st, paths),
            (DlFormula::Exists(v, body), Evidence::Quant { value, body: be }) if want => self.instance(v, value, body, want, st, be),
            (DlFormula::Forall(v, body), Evidence::Quant { value, body: be }) if !want => self.instance(v, value, body, want, st, be),
            (DlFormula::Forall(v, body), Evidence::Each { values }) if want => self.every_instance(v, values, body, want, st),
            (DlFormula::Exists(v, body), Evidence::Each { values }) if !want => self.every_instance(v, values, body, want, st),
            _ => Err("evidence does not match the formula".into()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn both(&mut self, x: &DlFormula, wx: bool, a: &Evidence, y: &DlFormula, wy: bool, b: &Evidence, st: &State<Real>) -> Result<(), String> {
        self.walk(x, wx, st, a)?;
        self.walk(y, wy, st, b)
    }

    fn replay(&mut self, p: &HybridProgram, st: &State<Real>, script: &ChoiceScript) -> Result<Outcome<Real>, String> {
        let (outcome, trace) = run_with(st, p, script, self.ode).map_err(|e| e.to_string())?;
        if !script.is_exact() || trace.entries.iter().any(|e| e.values.iter().any(|v| !v.is_exact()) || !e.time.is_exact()) {
            self.cert.exact = false;
        }
        self.cert.scripts.push(script.clone());
        if self.cert.trace.is_none() {
            self.cert.trace = Some(trace);
        }
        Ok(outcome)
    }

    fn execution(&mut self, p: &HybridProgram, post: &DlFormula, want: bool, st: &State<Real>, script: &ChoiceScript, pe: &Evidence) -> Result<(), String> {
        match self.replay(p, st, script)? {
            Outcome::Final(next) => self.walk(post, want, &next, pe),
            Outcome::Aborted { test, .. } => Err(format!("execution aborts at `{}`", print_fol(&test))),
        }
    }

    fn every_execution(
        &mut self,
        p: &HybridProgram,
        post: &DlFormula,
        want: bool,
        diamond: bool,
        st: &State<Real>,
        paths: &[(ChoiceScript, Option<Evidence>)],
    ) -> Result<(), String> {
        let pins = match post {
            DlFormula::Lifted(g) if !diamond => post_pins(p, &DlFormula::Lifted(negate_fol(g))),
            _ => post_pins(p, post),
        };
        let mut scripts = Vec::new();
        let en = Enumerator { ranges: &self.ob.inner_ranges, pins: &pins, ode: self.ode };
        en.go(vec![p], st.clone(), &mut Vec::new(), &mut scripts)?;
        for script in scripts {
            match self.replay(p, st, &script)? {
                Outcome::Aborted { .. } => {}
                Outcome::Final(next) => {
                    let recorded = paths.iter().find(|(s, _)| *s == script).and_then(|(_, e)| e.as_ref());
                    match (recorded, post) {
                        (Some(e), _) => self.walk(post, want, &next, e)?,
                        (None, DlFormula::Lifted(_)) => self.walk(post, want, &next, &Evidence::Atom)?,
                        (None, _) => return Err(format!("no evidence for execution `{}`", script.lines().join("; "))),
                    }
                }
            }
        }
        Ok(())
    }

    fn instance(&mut self, v: &str, value: &Real, body: &DlFormula, want: bool, st: &State<Real>, be: &Evidence) -> Result<(), String> {
        let next = st.with(v, value.clone()).map_err(|e| e.to_string())?;
        if !value.is_exact() {
            self.cert.exact = false;
        }
        self.walk(body, want, &next, be)
    }

    fn every_instance(&mut self, v: &str, values: &[(Real, Evidence)], body: &DlFormula, want: bool, st: &State<Real>) -> Result<(), String> {
        let domain = finite_values(self.ob.inner_ranges.get(v)).ok_or_else(|| format!("`{v}` does not range over a finite set"))?;
        for d in domain {
            let (_, e) = values.iter().find(|(x, _)| *x == d).ok_or_else(|| format!("no evidence for `{v}` = {d}"))?;
            self.instance(v, &d, body, want, st, e)?;
        }
        Ok(())
    }
}

fn finite_values(range: Option<&SearchRange>) -> Option<Vec<Real>> {
    match range? {
        SearchRange::Finite(values) => Some(values.iter().cloned().map(Real::Exact).collect()),
        SearchRange::Interval { lo, hi } if lo == hi => Some(vec![Real::Exact(lo.clone())]),
        SearchRange::Interval { .. } => None,
    }
}

/// `x = t` with `x` not in `t`.
fn equation<'f>(g: &'f FolFormula, x: &str) -> Option<&'f Term> {
    let FolFormula::Cmp(CmpOp::Eq, l, r) = g else { return None };
    [(l, r), (r, l)].into_iter().find_map(|(a, b)| match a {
        Term::Var(name) if name == x && !b.free_variables().contains(x) => Some(b),
        _ => None,
    })
}

/// Diamond postconditions `x = t` (box postconditions `x != t`) fix the only value of a single random
/// assignment of `x` that can reach the post, provided `t` is not changed
/// by the program.
fn post_pins(p: &HybridProgram, post: &DlFormula) -> Vec<(String, Term)> {
    let DlFormula::Lifted(g) = post else { return Vec::new() };
    let bound = p.may_bound();
    let mut out: Vec<(String, Term)> = Vec::new();
    for x in &bound {
        if p.write_count(x) != 1 {
            continue;
        }
        if let Some(t) = g.conjuncts().into_iter().find_map(|c| equation(c, x)) {
            if t.free_variables().is_disjoint(&bound) {
                out.push((x.clone(), t.clone()));
            }
        }
    }
    out
}

fn first_test(p: &HybridProgram) -> Option<&FolFormula> {
    match p {
        HybridProgram::Test(q) => Some(q),
        HybridProgram::Seq(a, _) => first_test(a),
        _ => None,
    }
}

/// Enumerates every execution of a discrete program.
struct Enumerator<'a> {
    ranges: &'a std::collections::BTreeMap<String, SearchRange>,
    pins: &'a [(String, Term)],
    ode: &'a OdeOptions,
}

impl Enumerator<'_> {
    fn go(&self, mut work: Vec<&HybridProgram>, st: State<Real>, script: &mut Vec<Decision>, out: &mut Vec<ChoiceScript>) -> Result<(), String> {
        let Some(p) = work.pop() else {
            out.push(ChoiceScript::new(script.clone()));
            return Ok(());
        };
        match p {
            HybridProgram::Assign(x, t) => {
                let v = eval_term(&st, t).map_err(|e| e.to_string())?;
                let next = st.with(x, v).map_err(|e| e.to_string())?;
                self.go(work, next, script, out)
            }
            HybridProgram::RandomAssign(x) => {
                let values = match finite_values(self.ranges.get(x)) {
                    Some(v) => v,
                    None => {
                        let from_test = work.last().and_then(|q| first_test(q)).and_then(|q| q.conjuncts().into_iter().find_map(|c| equation(c, x)));
                        let t = from_test
                            .or_else(|| self.pins.iter().find(|(v, _)| v == x).map(|(_, t)| t))
                            .ok_or_else(|| format!("cannot enumerate the values of `{x} := *`"))?;
                        vec![eval_term(&st, t).map_err(|e| e.to_string())?]
                    }
                };
                for v in values {
                    script.push(Decision::Random { var: Some(x.clone()), value: v.clone() });
                    let next = st.with(x, v).map_err(|e| e.to_string())?;
                    self.go(work.clone(), next, script, out)?;
                    script.pop();
                }
                Ok(())
            }
            HybridProgram::Test(q) => {
                let c = Compiler::new(st.vars(), self.ode).cond(q).map_err(|e| e.to_string())?;
                match c.judge(st.values()).map_err(|e| e.to_string())?.truth {
                    Some(true) => self.go(work, st, script, out),
                    Some(false) => {
                        out.push(ChoiceScript::new(script.clone()));
                        Ok(())
                    }
                    None => Err(format!("test `{}` is undecided", print_fol(q))),
                }
            }
            HybridProgram::Choice(a, b) => {
                for (side, branch) in [(Side::Left, a), (Side::Right, b)] {
                    script.push(Decision::Branch(side));
                    let mut w = work.clone();
                    w.push(branch);
                    self.go(w, st.clone(), script, out)?;
                    script.pop();
                }
                Ok(())
            }
            HybridProgram::Seq(a, b) => {
                work.push(b);
                work.push(a);
                self.go(work, st, script, out)
            }
            HybridProgram::Ode(_) | HybridProgram::Loop(_) => Err("cannot enumerate every execution of a continuous or looping program".into()),
        }
    }
}

/// Theorem-2 step: a witness of `psi` for zeta_iter instantiated at
/// `a := t` yields a witness of `not chi` for the instantiated invariant.
/// The two scripts of the psi witness (env; aux, then plant) are joined
/// into one execution of env; aux; plant.
pub fn derive_not_chi(psi: &Counterexample, not_chi: &Obligation) -> Result<Counterexample, String> {
    let Evidence::Both(_, outer) = &psi.evidence else { return Err("unexpected psi evidence".into()) };
    let Evidence::Modal { script: s1, post } = &**outer else { return Err("unexpected psi evidence".into()) };
    let Evidence::Both(_, inner) = &**post else { return Err("unexpected psi evidence".into()) };
    let Evidence::Modal { script: s2, .. } = &**inner else { return Err("unexpected psi evidence".into()) };
    let script = s1.concat(s2);
    let mut assignment = Vec::new();
    for (name, _) in &not_chi.search_box {
        let (_, v) = psi.assignment.iter().find(|(n, _)| n == name).ok_or_else(|| format!("psi witness lacks `{name}`"))?;
        assignment.push((name.clone(), v.clone()));
    }
    assignment.extend(not_chi.fixed_constants.iter().map(|(n, v)| (n.clone(), Real::Exact(v.clone()))));
    let mut cx = Counterexample {
        assignment,
        scripts: Vec::new(),
        margin: psi.margin,
        exact: false,
        evidence: Evidence::Both(Box::new(Evidence::Atom), Box::new(Evidence::Modal { script, post: Box::new(Evidence::Atom) })),
        innermost: None,
        trace: None,
        ode: psi.ode.clone(),
    };
    let cert = certify_detailed(&cx, not_chi)?;
    cx.scripts = cert.scripts;
    cx.exact = cert.exact;
    cx.innermost = cert.innermost;
    cx.trace = cert.trace;
    Ok(cx)
}
