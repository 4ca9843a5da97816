//! Brute-force reference evaluator for loop-free, ODE-free obligations over
//! finite ranges. Written against the syntax tree only; it shares no code
//! with the library's semantics or search.

use std::collections::BTreeMap;

use hpcheck::ast::{CmpOp, DlFormula, FolFormula, HybridProgram, Term};
use hpcheck::obligations::{Obligation, ObligationKind, SearchRange};
use num_rational::BigRational;
use num_traits::{One, Zero};

type Env = BTreeMap<String, BigRational>;

pub struct Oracle {
    /// Values of quantified variables.
    quantified: BTreeMap<String, Vec<BigRational>>,
    /// Values of random assignments.
    random: BTreeMap<String, Vec<BigRational>>,
}

fn values(r: &SearchRange) -> Vec<BigRational> {
    match r {
        SearchRange::Finite(v) => v.clone(),
        SearchRange::Interval { lo, hi } if lo == hi => vec![lo.clone()],
        SearchRange::Interval { .. } => panic!("oracle needs finite ranges"),
    }
}

impl Oracle {
    pub fn new(ob: &Obligation) -> Oracle {
        let mut quantified: BTreeMap<String, Vec<BigRational>> = ob.search_box.iter().map(|(v, r)| (v.clone(), values(r))).collect();
        let random: BTreeMap<String, Vec<BigRational>> = ob.inner_ranges.iter().map(|(v, r)| (v.clone(), values(r))).collect();
        for (v, r) in &random {
            quantified.entry(v.clone()).or_insert_with(|| r.clone());
        }
        Oracle { quantified, random }
    }

    /// Whether the search ought to report a finding.
    pub fn expects_finding(ob: &Obligation) -> bool {
        let env: Env = ob.fixed_constants.clone();
        let truth = Oracle::new(ob).dl(&ob.formula, &env);
        match ob.kind {
            ObligationKind::FalsifyUniversal => !truth,
            ObligationKind::FindWitness => truth,
        }
    }

    fn term(&self, t: &Term, env: &Env) -> BigRational {
        match t {
            Term::Var(v) => env.get(v).cloned().unwrap_or_else(|| panic!("`{v}` unbound")),
            Term::Const(c) => c.clone(),
            Term::Add(a, b) => self.term(a, env) + self.term(b, env),
            Term::Sub(a, b) => self.term(a, env) - self.term(b, env),
            Term::Mul(a, b) => self.term(a, env) * self.term(b, env),
            Term::Div(a, b) => {
                let d = self.term(b, env);
                assert!(!d.is_zero(), "division by zero");
                self.term(a, env) / d
            }
            Term::Neg(a) => -self.term(a, env),
            Term::Pow(a, n) => {
                let base = self.term(a, env);
                (0..*n).fold(BigRational::one(), |acc, _| acc * &base)
            }
        }
    }

    fn fol(&self, f: &FolFormula, env: &Env) -> bool {
        match f {
            FolFormula::True => true,
            FolFormula::False => false,
            FolFormula::Cmp(op, a, b) => {
                let (a, b) = (self.term(a, env), self.term(b, env));
                match op {
                    CmpOp::Ge => a >= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Le => a <= b,
                    CmpOp::Lt => a < b,
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                }
            }
            FolFormula::Not(a) => !self.fol(a, env),
            FolFormula::And(a, b) => self.fol(a, env) && self.fol(b, env),
            FolFormula::Or(a, b) => self.fol(a, env) || self.fol(b, env),
            FolFormula::Implies(a, b) => !self.fol(a, env) || self.fol(b, env),
            FolFormula::Iff(a, b) => self.fol(a, env) == self.fol(b, env),
            FolFormula::Forall(v, body) => self.domain(v).iter().all(|x| self.fol(body, &bind(env, v, x))),
            FolFormula::Exists(v, body) => self.domain(v).iter().any(|x| self.fol(body, &bind(env, v, x))),
        }
    }

    fn domain(&self, v: &str) -> &[BigRational] {
        self.quantified.get(v).unwrap_or_else(|| panic!("no range for `{v}`"))
    }

    /// Every final state of a non-aborting execution.
    fn program(&self, p: &HybridProgram, env: &Env) -> Vec<Env> {
        match p {
            HybridProgram::Assign(x, t) => vec![bind(env, x, &self.term(t, env))],
            HybridProgram::RandomAssign(x) => {
                let dom = self.random.get(x).unwrap_or_else(|| panic!("no range for `{x}`"));
                dom.iter().map(|v| bind(env, x, v)).collect()
            }
            HybridProgram::Test(q) => {
                if self.fol(q, env) {
                    vec![env.clone()]
                } else {
                    Vec::new()
                }
            }
            HybridProgram::Choice(a, b) => {
                let mut out = self.program(a, env);
                out.extend(self.program(b, env));
                out
            }
            HybridProgram::Seq(a, b) => self.program(a, env).iter().flat_map(|mid| self.program(b, mid)).collect(),
            HybridProgram::Ode(_) | HybridProgram::Loop(_) => panic!("oracle handles loop-free discrete programs only"),
        }
    }

    fn dl(&self, f: &DlFormula, env: &Env) -> bool {
        match f {
            DlFormula::Lifted(g) => self.fol(g, env),
            DlFormula::Box(p, post) => self.program(p, env).iter().all(|s| self.dl(post, s)),
            DlFormula::Diamond(p, post) => self.program(p, env).iter().any(|s| self.dl(post, s)),
            DlFormula::Not(a) => !self.dl(a, env),
            DlFormula::And(a, b) => self.dl(a, env) && self.dl(b, env),
            DlFormula::Or(a, b) => self.dl(a, env) || self.dl(b, env),
            DlFormula::Implies(a, b) => !self.dl(a, env) || self.dl(b, env),
            DlFormula::Forall(v, body) => self.domain(v).iter().all(|x| self.dl(body, &bind(env, v, x))),
            DlFormula::Exists(v, body) => self.domain(v).iter().any(|x| self.dl(body, &bind(env, v, x))),
        }
    }
}

fn bind(env: &Env, v: &str, x: &BigRational) -> Env {
    let mut e = env.clone();
    e.insert(v.to_string(), x.clone());
    e
}

/// Points in the outer grid.
pub fn grid_size(ob: &Obligation) -> usize {
    ob.search_box.iter().map(|(_, r)| values(r).len()).product()
}
