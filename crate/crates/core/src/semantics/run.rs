use std::sync::Arc;

use super::compile::Prog;
use super::script::{ChoiceScript, Decision, Side};
use super::state::{State, VarTable};
use super::SemanticsError;
use crate::ast::FolFormula;
use crate::real::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome<S> {
    Final(State<S>),
    /// A test (or an evolution domain at time zero or along the flow) failed.
    Aborted { test: FolFormula, state: State<S> },
}

impl<S> Outcome<S> {
    pub fn final_state(&self) -> Option<&State<S>> {
        match self {
            Outcome::Final(s) => Some(s),
            Outcome::Aborted { .. } => None,
        }
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self, Outcome::Aborted { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry<S> {
    pub step: usize,
    pub construct: Arc<str>,
    pub time: S,
    pub values: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace<S> {
    pub vars: Arc<VarTable>,
    pub entries: Vec<TraceEntry<S>>,
}

impl<S: Scalar> Trace<S> {
    pub fn value(&self, entry: usize, name: &str) -> Option<&S> {
        self.vars.slot(name).map(|s| &self.entries[entry].values[s])
    }

    pub fn last(&self) -> &TraceEntry<S> {
        self.entries.last().expect("a trace starts with its initial state")
    }
}

/// What a driven run needs next, with the context to choose it.
pub enum Need<'n, S> {
    Branch,
    Random { var: &'n str },
    /// `max` is the supremum of admissible durations from the current state.
    Duration { max: S },
    Loop,
}

type Chooser<'c, S> = dyn FnMut(Need<'_, S>, &[S]) -> Decision + 'c;

struct Runner<'a, 'c, S> {
    decisions: Vec<Decision>,
    chooser: Option<&'c mut Chooser<'c, S>>,
    cursor: usize,
    time: S,
    trace: Vec<TraceEntry<S>>,
    vars: &'a VarTable,
}

type Abort = FolFormula;

impl<'a, 'c, S: Scalar> Runner<'a, 'c, S> {
    /// Let the chooser of a driven run extend an exhausted script.
    fn supply<'n>(&mut self, need: impl FnOnce() -> Result<Need<'n, S>, SemanticsError>, values: &[S]) -> Result<(), SemanticsError> {
        if self.cursor == self.decisions.len() {
            if let Some(choose) = self.chooser.as_mut() {
                let d = choose(need()?, values);
                self.decisions.push(d);
            }
        }
        Ok(())
    }

    fn next(&mut self, expected: &'static str, construct: &str) -> Result<Decision, SemanticsError> {
        let d = self
            .decisions
            .get(self.cursor)
            .ok_or_else(|| SemanticsError::Exhausted { expected, construct: construct.to_string() })?;
        if d.kind() != expected {
            return Err(SemanticsError::Mismatch { position: self.cursor, expected, found: d.to_string(), construct: construct.to_string() });
        }
        self.cursor += 1;
        Ok(d.clone())
    }

    fn record(&mut self, construct: &Arc<str>, values: &[S]) {
        self.trace.push(TraceEntry { step: self.trace.len(), construct: construct.clone(), time: self.time.clone(), values: values.to_vec() });
    }

    fn exec(&mut self, prog: &Prog, values: &mut Vec<S>) -> Result<Option<Abort>, SemanticsError> {
        match prog {
            Prog::Assign { slot, expr, label } => {
                values[*slot] = expr.eval(values)?;
                self.record(label, values);
            }
            Prog::Random { slot, label } => {
                let table = self.vars;
                let var = table.name(*slot);
                self.supply(|| Ok(Need::Random { var }), values)?;
                let Decision::Random { var, value } = self.next("random", label)? else { unreachable!() };
                if let Some(name) = var {
                    if name != self.vars.name(*slot) {
                        return Err(SemanticsError::Mismatch {
                            position: self.cursor - 1,
                            expected: "random",
                            found: format!("random value for `{name}`"),
                            construct: label.to_string(),
                        });
                    }
                }
                values[*slot] = S::from_real(&value);
                self.record(label, values);
            }
            Prog::Test { cond, formula, label } => {
                let j = cond.judge(values)?;
                match j.truth {
                    Some(true) => self.record(label, values),
                    Some(false) => return Ok(Some((**formula).clone())),
                    None => return Err(SemanticsError::Undecided(label.to_string())),
                }
            }
            Prog::Ode(ode) => {
                let label: Arc<str> = ode.label.as_str().into();
                self.supply(|| Ok(Need::Duration { max: ode.max_duration(values)? }), values)?;
                let d = self.next("duration", &label)?;
                let duration = match d {
                    Decision::Duration(r) => S::from_real(&r),
                    Decision::MaxDuration => ode.max_duration(values)?,
                    _ => unreachable!(),
                };
                match ode.evolve(values, &duration)? {
                    Some(next) => {
                        *values = next;
                        self.time = self.time.add(&duration);
                        self.record(&label, values);
                    }
                    None => return Ok(Some(ode.domain_formula.clone())),
                }
            }
            Prog::Choice(left, right) => {
                self.supply(|| Ok(Need::Branch), values)?;
                let Decision::Branch(side) = self.next("branch", "choice")? else { unreachable!() };
                return self.exec(if side == Side::Left { left } else { right }, values);
            }
            Prog::Seq(items) => {
                for p in items {
                    if let Some(abort) = self.exec(p, values)? {
                        return Ok(Some(abort));
                    }
                }
            }
            Prog::Loop(body) => {
                self.supply(|| Ok(Need::Loop), values)?;
                let Decision::LoopCount(n) = self.next("loop", "loop")? else { unreachable!() };
                for _ in 0..n {
                    if let Some(abort) = self.exec(body, values)? {
                        return Ok(Some(abort));
                    }
                }
            }
        }
        Ok(None)
    }
}

/// Deterministic replay of a compiled program. Decisions left over after an
/// abort are ignored; left over after normal termination they are an error.
pub fn run_compiled<S: Scalar>(state: &State<S>, prog: &Prog, script: &ChoiceScript) -> Result<(Outcome<S>, Trace<S>), SemanticsError> {
    let (outcome, trace, _) = execute(state, prog, script.decisions.clone(), None)?;
    Ok((outcome, trace))
}

/// Run a compiled program asking `choose` for every decision. Returns the
/// script of the decisions made.
pub fn run_driven<'c, S: Scalar>(
    state: &State<S>,
    prog: &Prog,
    choose: &'c mut Chooser<'c, S>,
) -> Result<(Outcome<S>, Trace<S>, ChoiceScript), SemanticsError> {
    execute(state, prog, Vec::new(), Some(choose))
}

fn execute<'c, S: Scalar>(
    state: &State<S>,
    prog: &Prog,
    decisions: Vec<Decision>,
    chooser: Option<&'c mut Chooser<'c, S>>,
) -> Result<(Outcome<S>, Trace<S>, ChoiceScript), SemanticsError> {
    let vars = state.vars().clone();
    let mut runner = Runner { decisions, chooser, cursor: 0, time: S::zero(), trace: Vec::new(), vars: &vars };
    let mut values = state.values().to_vec();
    runner.record(&Arc::from("init"), &values);
    let abort = runner.exec(prog, &mut values)?;
    let outcome = match abort {
        Some(test) => Outcome::Aborted { test, state: State::new(vars.clone(), values) },
        None => {
            if runner.cursor < runner.decisions.len() {
                return Err(SemanticsError::Surplus { remaining: runner.decisions.len() - runner.cursor });
            }
            Outcome::Final(State::new(vars.clone(), values))
        }
    };
    let script = ChoiceScript::new(runner.decisions);
    let entries = runner.trace;
    Ok((outcome, Trace { vars: vars.clone(), entries }, script))
}
