//! The six-part model shape `(env; aux; ctrl; plant)*` with its constants,
//! search domains, candidate invariants and env-action relation.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;

use crate::ast::{CmpOp, FolFormula, FreeVariables, HybridProgram, OdeSystem, Term};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstantDecl {
    pub name: String,
    pub value: BigRational,
}

/// Search domain of a variable. Bounds may mention constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    Interval { lo: Term, hi: Term },
    Finite(Vec<Term>),
}

/// Relation `R(e, e+)` between consecutive env actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub env_var: String,
    pub successor: String,
    pub formula: FolFormula,
}

/// Components recognised when a model has the standard shape:
/// `env = e := *; ?P`, `aux = a := *; ?Q`, `ctrl = if (!safe) {a := *; ?C}`,
/// `plant = tau := 0; {s' = f(s), tau' = 1 & F & tau <= T}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StandardShape {
    pub env_var: String,
    pub env_test: FolFormula,
    pub action_var: String,
    pub aux_test: FolFormula,
    pub safe: FolFormula,
    pub control_law: FolFormula,
    pub clock: String,
    pub sampling_bound: Term,
    pub state_vars: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub constants: Vec<ConstantDecl>,
    pub domains: Vec<(String, Domain)>,
    pub init: FolFormula,
    pub guarantee: FolFormula,
    pub env: HybridProgram,
    pub aux: HybridProgram,
    pub ctrl: HybridProgram,
    pub plant: HybridProgram,
    pub invariants: Vec<(String, FolFormula)>,
    pub relation: Option<Relation>,
    /// Non-constant variables: domain order first, then first occurrence.
    pub variables: Vec<String>,
    pub shape: Option<StandardShape>,
    pub warnings: Vec<String>,
}

impl Model {
    pub fn nonstandard_shape(&self) -> bool {
        self.shape.is_none()
    }

    pub fn loop_body(&self) -> HybridProgram {
        self.env.clone().seq(self.aux.clone().seq(self.ctrl.clone().seq(self.plant.clone())))
    }

    /// The full system `(env; aux; ctrl; plant)*`.
    pub fn system(&self) -> HybridProgram {
        self.loop_body().repeat()
    }

    pub fn constant_names(&self) -> BTreeSet<String> {
        self.constants.iter().map(|c| c.name.clone()).collect()
    }

    pub fn constant_values(&self) -> BTreeMap<String, BigRational> {
        self.constants.iter().map(|c| (c.name.clone(), c.value.clone())).collect()
    }

    pub fn is_constant(&self, name: &str) -> bool {
        self.constants.iter().any(|c| c.name == name)
    }

    /// Conjuncts of `init` that mention only constants.
    pub fn constant_conjuncts(&self) -> Vec<FolFormula> {
        let names = self.constant_names();
        self.init
            .conjuncts()
            .into_iter()
            .filter(|c| {
                let fv = c.free_variables();
                !fv.is_empty() && fv.is_subset(&names)
            })
            .cloned()
            .collect()
    }

    pub fn constant_constraint(&self) -> FolFormula {
        FolFormula::conjunction(self.constant_conjuncts())
    }

    /// Constraints on a single constant copied from `init`.
    pub fn constraint_for(&self, name: &str) -> FolFormula {
        FolFormula::conjunction(self.constant_conjuncts().into_iter().filter(|c| c.free_variables().contains(name)))
    }

    pub fn invariant(&self, name: &str) -> Option<&FolFormula> {
        self.invariants.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn domain(&self, name: &str) -> Option<&Domain> {
        self.domains.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    /// Constants followed by variables: the slot order used for states.
    pub fn state_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.constants.iter().map(|c| c.name.clone()).collect();
        names.extend(self.variables.iter().cloned());
        names
    }

    pub fn plant_ode(&self) -> Option<&OdeSystem> {
        find_ode(&self.plant)
    }
}

fn find_ode(p: &HybridProgram) -> Option<&OdeSystem> {
    match p {
        HybridProgram::Ode(ode) => Some(ode),
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => find_ode(a).or_else(|| find_ode(b)),
        HybridProgram::Loop(a) => find_ode(a),
        _ => None,
    }
}

/// `x := *; ?P` -> `(x, P)`.
fn random_then_test(p: &HybridProgram) -> Option<(&str, &FolFormula)> {
    if let HybridProgram::Seq(first, second) = p {
        if let (HybridProgram::RandomAssign(x), HybridProgram::Test(q)) = (&**first, &**second) {
            return Some((x, q));
        }
    }
    None
}

/// Recognise the standard shape, returning it or the reasons it does not apply.
pub fn detect_shape(
    env: &HybridProgram,
    aux: &HybridProgram,
    ctrl: &HybridProgram,
    plant: &HybridProgram,
    constants: &BTreeSet<String>,
) -> Result<StandardShape, Vec<String>> {
    let mut problems = Vec::new();
    let env_part = random_then_test(env);
    if env_part.is_none() {
        problems.push("env is not of the form `e := *; ?P`".to_string());
    }
    let aux_part = random_then_test(aux);
    if aux_part.is_none() {
        problems.push("aux is not of the form `a := *; ?Q`".to_string());
    }
    let mut ctrl_part = None;
    match ctrl.as_if() {
        Some((FolFormula::Not(safe), body)) => match random_then_test(body) {
            Some((a, law)) => ctrl_part = Some(((**safe).clone(), a, law.clone())),
            None => problems.push("ctrl body is not of the form `a := *; ?C`".to_string()),
        },
        _ => problems.push("ctrl is not of the form `if (!safe) {a := *; ?C}`".to_string()),
    }
    let mut plant_part = None;
    match plant {
        HybridProgram::Seq(reset, ode) => match (&**reset, &**ode) {
            (HybridProgram::Assign(clock, Term::Const(zero)), HybridProgram::Ode(sys)) if num_traits::Zero::is_zero(zero) => {
                let clock_rate = sys.equations.iter().find(|(x, _)| x == clock).map(|(_, t)| t);
                let rate_ok = matches!(clock_rate, Some(Term::Const(c)) if num_traits::One::is_one(c));
                let bound = sys.domain.conjuncts().into_iter().find_map(|c| match c {
                    FolFormula::Cmp(CmpOp::Le, Term::Var(t), b) if t == clock && b.free_variables().is_subset(constants) => Some(b.clone()),
                    _ => None,
                });
                if !rate_ok {
                    problems.push(format!("plant does not evolve the clock `{clock}` at rate 1"));
                } else if let Some(bound) = bound {
                    let state_vars = sys.equations.iter().map(|(x, _)| x.clone()).filter(|x| x != clock).collect();
                    plant_part = Some((clock.clone(), bound, state_vars));
                } else {
                    problems.push(format!("plant domain does not bound the clock by `{clock} <= T`"));
                }
            }
            _ => problems.push("plant is not of the form `tau := 0; {ode & Q}`".to_string()),
        },
        _ => problems.push("plant is not of the form `tau := 0; {ode & Q}`".to_string()),
    }
    if let (Some((e, _)), Some((a, _))) = (env_part, aux_part) {
        if e == a {
            problems.push("env and aux assign the same variable".to_string());
        }
    }
    if let (Some((_, a, _)), Some((a2, _))) = (&ctrl_part, aux_part) {
        if *a != a2 {
            problems.push(format!("ctrl assigns `{a}` but aux assigns `{a2}`"));
        }
    }
    if let (Some((clock, _, states)), Some((e, _)), Some((a, _))) = (&plant_part, env_part, aux_part) {
        let states: &Vec<String> = states;
        if states.iter().any(|s| s == e || s == a) || clock == e || clock == a {
            problems.push("plant evolves the env or action variable".to_string());
        }
    }
    match (env_part, aux_part, ctrl_part, plant_part) {
        (Some((e, p)), Some((a, q)), Some((safe, _, law)), Some((clock, bound, state_vars))) if problems.is_empty() => Ok(StandardShape {
            env_var: e.to_string(),
            env_test: p.clone(),
            action_var: a.to_string(),
            aux_test: q.clone(),
            safe,
            control_law: law,
            clock,
            sampling_bound: bound,
            state_vars,
        }),
        _ => Err(problems),
    }
}
