//! Desk-scale decision of obligations: search for a falsifying state or an
//! existential witness, then certify the finding by exact replay.
//!
//! A search that finds nothing proves nothing. Its verdict only says the
//! obligation is consistent with being valid under the configured budget
//! and boxes.

mod certify;
mod explore;
mod form;
mod search;
mod suite;
#[cfg(test)]
mod tests;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use thiserror::Error;

pub use certify::{certify, certify_detailed, derive_not_chi, Certificate};
pub use explore::Evidence;
pub use form::{lift_quantifiers, SNAP};
pub use suite::{check_suite, run_table2, ItemResult, Report, ReportRow, SuiteEntry, SuiteItem, SuiteRow, Table2Report, Table2Row, CAVEAT};

pub use crate::semantics::violation_margin;

use crate::obligations::{Obligation, ObligationKind};
use crate::real::Real;
use crate::semantics::{ChoiceScript, OdeOptions, SemanticsError, Trace};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    /// Maximum number of candidate evaluations.
    pub budget: u64,
    pub seed: u64,
    /// Grid refinement levels tried before sampling.
    pub grid_levels: u32,
    /// A grid level larger than this ends the grid phase.
    pub grid_cap: u64,
    pub local_refine_iters: u32,
    /// Durations tried per evolution, including 0 and the maximum.
    pub duration_samples: usize,
    /// Sampled values per random assignment, besides keeping the current one.
    pub random_samples: usize,
    pub max_loop_unroll: usize,
    pub ode: OdeOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 200_000,
            seed: 0,
            grid_levels: 6,
            grid_cap: 20_000,
            local_refine_iters: 8,
            duration_samples: 4,
            random_samples: 2,
            max_loop_unroll: 2,
            ode: OdeOptions::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), CheckError> {
        if self.budget < 1 {
            return Err(CheckError::Config("budget must be at least 1".into()));
        }
        if self.duration_samples < 2 {
            return Err(CheckError::Config("at least two duration samples (0 and the maximum) are required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("`{0}` is neither searched nor fixed")]
    Uncoverable(String),
    #[error("quantifier prefix does not match the search box at `{0}`")]
    Prefix(String),
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Obligation(#[from] crate::obligations::ObligationError),
    #[error("{0}")]
    Suite(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Falsified,
    WitnessFound,
    NotFalsified,
    NoWitnessFound,
}

impl Outcome {
    pub fn is_finding(self) -> bool {
        matches!(self, Outcome::Falsified | Outcome::WitnessFound)
    }

    /// Report vocabulary.
    pub fn phrase(self) -> &'static str {
        match self {
            Outcome::Falsified => "No (counterexample)",
            Outcome::NotFalsified => "consistent with valid",
            Outcome::WitnessFound => "Yes (witness)",
            Outcome::NoWitnessFound => "no witness found",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stats {
    pub evaluations: u64,
    /// Candidates some part of which could not be decided.
    pub undecided: u64,
    /// Floating-point findings that failed exact re-validation.
    pub rejected: u64,
    /// The finite box was enumerated completely.
    pub exhaustive: bool,
    /// Largest search value seen; positive only for findings.
    pub best_margin: f64,
    pub wall_ms: u64,
}

/// A certified falsifying state or witness.
#[derive(Clone, Debug)]
pub struct Counterexample {
    /// Values of the searched variables, then the fixed constants.
    pub assignment: Vec<(String, Real)>,
    /// One script per replayed execution, in evaluation order.
    pub scripts: Vec<ChoiceScript>,
    pub margin: f64,
    /// Certified without any floating-point value; otherwise numeric only.
    pub exact: bool,
    pub evidence: Evidence,
    /// The last first-order formula checked and the truth value it had.
    pub innermost: Option<(String, bool)>,
    pub trace: Option<Trace<Real>>,
    pub ode: OdeOptions,
}

impl Counterexample {
    pub fn value(&self, name: &str) -> Option<&Real> {
        self.assignment.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

struct Assignment<'a>(&'a [(String, Real)]);

impl Serialize for Assignment<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (n, v) in self.0 {
            m.serialize_entry(n, &v.to_string())?;
        }
        m.end()
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Serialize for Counterexample {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Certificate", 4)?;
        st.serialize_field("assignment", &Assignment(&self.assignment))?;
        st.serialize_field("scripts", &self.scripts)?;
        st.serialize_field("margin", &finite(self.margin))?;
        st.serialize_field("exact", &self.exact)?;
        st.end()
    }
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub obligation: String,
    pub formula: String,
    pub kind: ObligationKind,
    pub outcome: Outcome,
    pub certificate: Option<Counterexample>,
    pub seed: u64,
    pub stats: Stats,
}

impl Verdict {
    pub fn is_finding(&self) -> bool {
        self.outcome.is_finding()
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Verdict", 6)?;
        st.serialize_field("obligation", &self.obligation)?;
        st.serialize_field("kind", &self.kind)?;
        st.serialize_field("verdict", &self.outcome)?;
        st.serialize_field("evaluations", &self.stats.evaluations)?;
        st.serialize_field("seed", &self.seed)?;
        if let Some(c) = &self.certificate {
            st.serialize_field("certificate", c)?;
        }
        st.end()
    }
}

/// Search the obligation's box for a falsifying state (universal
/// obligations) or a witness (existential ones).
pub fn check(obligation: &Obligation, config: &SearchConfig) -> Result<Verdict, CheckError> {
    search::run(obligation, config)
}

