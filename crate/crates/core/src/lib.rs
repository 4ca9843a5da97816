//! Hybrid-program modeling-error checker.
//!
//! Models are written in a small dL-style language ([`parser`]), executed
//! under explicitly resolved nondeterminism ([`semantics`]), turned into proof
//! obligations ([`obligations`]) and decided by certified search
//! ([`checker`]). [`models`] bundles the vehicle models and the eight-row suite.

#[cfg(any(test, feature = "arbitrary"))]
pub mod arbitrary;
pub mod ast;
pub mod checker;
pub mod model;
pub mod models;
pub mod obligations;
pub mod parser;
pub mod real;
pub mod semantics;

pub use ast::{CmpOp, DlFormula, FolFormula, FreeVariables, HybridProgram, OdeSystem, Term};
pub use model::Model;
pub use parser::{parse_formula, parse_model, parse_program, ParseError, SourceSpan};
