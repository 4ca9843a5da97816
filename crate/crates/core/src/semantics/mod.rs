//! Execution of hybrid programs under explicitly resolved nondeterminism.
//!
//! Values stay exact rationals until a numeric ODE or an irrational square
//! root forces floating point. The Choice convention is that `branch left`
//! picks the first operand; for an `if` the guarded body is on the left.

mod compile;
mod ode;
mod run;
mod script;
mod state;

pub use compile::{compare_margin, Compiler, Cond, Expr, Judgement, Prog, STRICT_EPSILON};
pub use ode::{CompiledOde, OdeOptions, NUMERIC_DOMAIN_TOLERANCE};
pub use run::{run_compiled, run_driven, Need, Outcome, Trace, TraceEntry};
pub use script::{parse_value, ChoiceScript, Decision, ScriptFile, ScriptParseError, Side};
pub use state::{State, VarTable};

use thiserror::Error;

use crate::ast::{FolFormula, HybridProgram, OdeSystem, Term};
use crate::real::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("variable `{0}` has no value")]
    Unassigned(String),
    #[error("quantifier in a formula that must be quantifier-free: {0}")]
    Quantifier(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("numeric blow-up while integrating {0}")]
    NumericBlowUp(String),
    #[error("cannot decide test {0} with inexact values")]
    Undecided(String),
    #[error("script exhausted at `{construct}`: {} required", decision_name(expected))]
    Exhausted { expected: &'static str, construct: String },
    #[error("script has {remaining} surplus decision(s)")]
    Surplus { remaining: usize },
    #[error("script decision {position} is `{found}` but `{construct}` needs {}", decision_name(expected))]
    Mismatch { position: usize, expected: &'static str, found: String, construct: String },
}

fn decision_name(kind: &str) -> &'static str {
    match kind {
        "branch" => "Branch",
        "random" => "RandomValue",
        "duration" => "Duration",
        _ => "LoopCount",
    }
}

impl SemanticsError {
    pub fn is_script_error(&self) -> bool {
        matches!(self, SemanticsError::Exhausted { .. } | SemanticsError::Surplus { .. } | SemanticsError::Mismatch { .. })
    }
}

pub fn eval_term<S: Scalar>(state: &State<S>, term: &Term) -> Result<S, SemanticsError> {
    let opts = OdeOptions::default();
    Compiler::new(state.vars(), &opts).expr(term)?.eval(state.values())
}

/// Truth of a quantifier-free formula.
pub fn eval_fol<S: Scalar>(state: &State<S>, formula: &FolFormula) -> Result<bool, SemanticsError> {
    let opts = OdeOptions::default();
    Compiler::new(state.vars(), &opts).cond(formula)?.holds(state.values())
}

/// Signed distance of a quantifier-free formula from its truth boundary.
pub fn violation_margin<S: Scalar>(state: &State<S>, formula: &FolFormula) -> Result<f64, SemanticsError> {
    let opts = OdeOptions::default();
    Ok(Compiler::new(state.vars(), &opts).cond(formula)?.judge(state.values())?.margin)
}

pub fn evolve_plant<S: Scalar>(state: &State<S>, ode: &OdeSystem, duration: &S, opts: &OdeOptions) -> Result<Outcome<S>, SemanticsError> {
    let compiled = CompiledOde::compile(&Compiler::new(state.vars(), opts), ode)?;
    Ok(match compiled.evolve(state.values(), duration)? {
        Some(values) => Outcome::Final(State::new(state.vars().clone(), values)),
        None => Outcome::Aborted { test: ode.domain.clone(), state: state.clone() },
    })
}

pub fn max_admissible_duration<S: Scalar>(state: &State<S>, ode: &OdeSystem, opts: &OdeOptions) -> Result<S, SemanticsError> {
    CompiledOde::compile(&Compiler::new(state.vars(), opts), ode)?.max_duration(state.values())
}

pub fn run<S: Scalar>(state: &State<S>, program: &HybridProgram, script: &ChoiceScript) -> Result<(Outcome<S>, Trace<S>), SemanticsError> {
    run_with(state, program, script, &OdeOptions::default())
}

pub fn run_with<S: Scalar>(
    state: &State<S>,
    program: &HybridProgram,
    script: &ChoiceScript,
    opts: &OdeOptions,
) -> Result<(Outcome<S>, Trace<S>), SemanticsError> {
    let prog = Compiler::new(state.vars(), opts).prog(program)?;
    run_compiled(state, &prog, script)
}

#[cfg(test)]
mod tests;
