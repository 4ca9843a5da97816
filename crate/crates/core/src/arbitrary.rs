//! Proptest strategies for syntax trees in the parser's canonical image:
//! every generated tree is exactly what parsing its printed form yields.
//!
//! Depth counts nodes on the longest root-to-leaf path across all kinds,
//! so a `dl(8)` tree has terms, formulas and programs nested at most 8 deep.

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use proptest::sample::subsequence;
use proptest::strategy::Union;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::ast::{CmpOp, DlFormula, FolFormula, HybridProgram, OdeSystem, Term};
use crate::obligations::{Obligation, ObligationKind, SearchRange};
use crate::semantics::VarTable;

pub const MAX_DEPTH: usize = 8;

const NAMES: [&str; 7] = ["x", "v", "a", "T", "tau", "xc", "anmin"];

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(&NAMES[..]).prop_map(str::to_string)
}

/// Terminating decimals only; other rationals print as quotients.
fn constant() -> impl Strategy<Value = BigRational> {
    (-999i64..=999, 0u32..=3).prop_map(|(n, k)| BigRational::new(BigInt::from(n), BigInt::from(10i64.pow(k))))
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![Just(CmpOp::Ge), Just(CmpOp::Gt), Just(CmpOp::Le), Just(CmpOp::Lt), Just(CmpOp::Eq), Just(CmpOp::Ne)]
}

fn ode(rhs: BoxedStrategy<Term>, domain: BoxedStrategy<FolFormula>) -> BoxedStrategy<HybridProgram> {
    (subsequence(&NAMES[..], 1..=3), prop::collection::vec(rhs, 3), domain)
        .prop_map(|(vars, rhs, domain)| {
            let equations = vars.into_iter().map(str::to_string).zip(rhs).collect();
            HybridProgram::Ode(OdeSystem { equations, domain })
        })
        .boxed()
}

/// Strategies for every level `0..=max`, each built from the previous one.
/// Trees at level `d` have depth at most `d + 1`.
struct Levels {
    terms: Vec<BoxedStrategy<Term>>,
    fols: Vec<BoxedStrategy<FolFormula>>,
    programs: Vec<BoxedStrategy<HybridProgram>>,
    dls: Vec<BoxedStrategy<DlFormula>>,
}

impl Levels {
    fn new(max: usize) -> Levels {
        let mut l = Levels { terms: Vec::new(), fols: Vec::new(), programs: Vec::new(), dls: Vec::new() };
        l.terms.push(prop_oneof![name().prop_map(Term::Var), constant().prop_map(Term::Const)].boxed());
        l.fols.push(prop_oneof![Just(FolFormula::True), Just(FolFormula::False)].boxed());
        l.programs.push(name().prop_map(HybridProgram::RandomAssign).boxed());
        l.dls.push(l.fols[0].clone().prop_map(DlFormula::Lifted).boxed());
        for d in 1..=max {
            let t = l.terms[d - 1].clone();
            let term = prop_oneof![
                3 => t.clone(),
                1 => (t.clone(), t.clone()).prop_map(|(a, b)| a.add(b)),
                1 => (t.clone(), t.clone()).prop_map(|(a, b)| a.sub(b)),
                1 => (t.clone(), t.clone()).prop_map(|(a, b)| a.mul(b)),
                1 => (t.clone(), t.clone()).prop_map(|(a, b)| a.div(b)),
                1 => t.clone().prop_map(Term::neg),
                1 => (t.clone(), 0u32..=4).prop_map(|(a, n)| a.pow(n)),
            ]
            .boxed();

            let f = l.fols[d - 1].clone();
            let fol = prop_oneof![
                3 => f.clone(),
                3 => (cmp_op(), t.clone(), t.clone()).prop_map(|(op, a, b)| FolFormula::Cmp(op, a, b)),
                1 => f.clone().prop_map(FolFormula::not),
                1 => (f.clone(), f.clone()).prop_map(|(a, b)| a.and(b)),
                1 => (f.clone(), f.clone()).prop_map(|(a, b)| a.or(b)),
                1 => (f.clone(), f.clone()).prop_map(|(a, b)| a.implies(b)),
                1 => (f.clone(), f.clone()).prop_map(|(a, b)| a.iff(b)),
                1 => (name(), f.clone()).prop_map(|(v, b)| FolFormula::forall(v, b)),
                1 => (name(), f.clone()).prop_map(|(v, b)| FolFormula::exists(v, b)),
            ]
            .boxed();

            let p = l.programs[d - 1].clone();
            let mut arms: Vec<(u32, BoxedStrategy<HybridProgram>)> = vec![
                (3, p.clone()),
                (2, (name(), t.clone()).prop_map(|(x, e)| HybridProgram::assign(x, e)).boxed()),
                (1, f.clone().prop_map(HybridProgram::test).boxed()),
                (1, ode(t.clone(), f.clone())),
                (1, (p.clone(), p.clone()).prop_map(|(a, b)| a.choice(b)).boxed()),
                (2, (p.clone(), p.clone()).prop_map(|(a, b)| a.seq(b)).boxed()),
                (1, p.clone().prop_map(HybridProgram::repeat).boxed()),
            ];
            if d >= 2 {
                arms.push((1, ode(l.terms[d - 2].clone(), l.fols[d - 2].clone()).prop_map(HybridProgram::repeat).boxed()));
            }
            let program = Union::new_weighted(arms).boxed();

            let g = l.dls[d - 1].clone();
            let dl = prop_oneof![
                2 => g.clone(),
                1 => f.clone().prop_map(DlFormula::Lifted),
                2 => (p.clone(), g.clone()).prop_map(|(p, q)| DlFormula::boxed(p, q)),
                2 => (p.clone(), g.clone()).prop_map(|(p, q)| DlFormula::diamond(p, q)),
                1 => g.clone().prop_map(DlFormula::not),
                1 => (g.clone(), g.clone()).prop_map(|(a, b)| a.and(b)),
                1 => (g.clone(), g.clone()).prop_map(|(a, b)| a.or(b)),
                1 => (g.clone(), g.clone()).prop_map(|(a, b)| a.implies(b)),
                1 => (name(), g.clone()).prop_map(|(v, b)| DlFormula::forall(v, b)),
                1 => (name(), g).prop_map(|(v, b)| DlFormula::exists(v, b)),
            ]
            .boxed();

            l.terms.push(term);
            l.fols.push(fol);
            l.programs.push(program);
            l.dls.push(dl);
        }
        l
    }
}

// Each strategy yields trees of depth at most `depth` (at least 1).

pub fn term(depth: usize) -> BoxedStrategy<Term> {
    Levels::new(depth.max(1) - 1).terms.pop().expect("level exists")
}

pub fn fol(depth: usize) -> BoxedStrategy<FolFormula> {
    Levels::new(depth.max(1) - 1).fols.pop().expect("level exists")
}

pub fn program(depth: usize) -> BoxedStrategy<HybridProgram> {
    Levels::new(depth.max(1) - 1).programs.pop().expect("level exists")
}

pub fn dl(depth: usize) -> BoxedStrategy<DlFormula> {
    Levels::new(depth.max(1) - 1).dls.pop().expect("level exists")
}

pub fn term_depth(t: &Term) -> usize {
    1 + match t {
        Term::Var(_) | Term::Const(_) => 0,
        Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) | Term::Div(a, b) => term_depth(a).max(term_depth(b)),
        Term::Neg(a) | Term::Pow(a, _) => term_depth(a),
    }
}

pub fn fol_depth(f: &FolFormula) -> usize {
    match f {
        FolFormula::True | FolFormula::False => 1,
        FolFormula::Cmp(_, a, b) => 1 + term_depth(a).max(term_depth(b)),
        FolFormula::Not(a) | FolFormula::Forall(_, a) | FolFormula::Exists(_, a) => 1 + fol_depth(a),
        FolFormula::And(a, b) | FolFormula::Or(a, b) | FolFormula::Implies(a, b) | FolFormula::Iff(a, b) => {
            1 + fol_depth(a).max(fol_depth(b))
        }
    }
}

pub fn program_depth(p: &HybridProgram) -> usize {
    1 + match p {
        HybridProgram::Assign(_, t) => term_depth(t),
        HybridProgram::RandomAssign(_) => 0,
        HybridProgram::Test(q) => fol_depth(q),
        HybridProgram::Ode(ode) => ode.equations.iter().map(|(_, t)| term_depth(t)).chain([fol_depth(&ode.domain)]).max().unwrap_or(0),
        HybridProgram::Choice(a, b) | HybridProgram::Seq(a, b) => program_depth(a).max(program_depth(b)),
        HybridProgram::Loop(a) => program_depth(a),
    }
}

pub fn dl_depth(f: &DlFormula) -> usize {
    match f {
        DlFormula::Lifted(g) => fol_depth(g),
        DlFormula::Box(p, q) | DlFormula::Diamond(p, q) => 1 + program_depth(p).max(dl_depth(q)),
        DlFormula::Not(a) | DlFormula::Forall(_, a) | DlFormula::Exists(_, a) => 1 + dl_depth(a),
        DlFormula::And(a, b) | DlFormula::Or(a, b) | DlFormula::Implies(a, b) => 1 + dl_depth(a).max(dl_depth(b)),
    }
}

// ---------------------------------------------------------------------------
// Small obligations: loop-free, ODE-free, every range finite.

/// Outer variables range over `{-3/2, -1, ..., 3/2}`.
pub const SMALL_OUTER: [&str; 3] = ["x", "y", "z"];
/// Random-assignment targets range over `{-1, 0, 1/2, 2}`.
pub const SMALL_RANDOM: [&str; 2] = ["r", "s"];

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn small_outer_range() -> SearchRange {
    SearchRange::Finite((-3..=3).map(|k| ratio(k, 2)).collect())
}

pub fn small_random_range() -> SearchRange {
    SearchRange::Finite(vec![ratio(-1, 1), ratio(0, 1), ratio(1, 2), ratio(2, 1)])
}

fn small_name() -> impl Strategy<Value = String> {
    prop::sample::select(&["x", "y", "z", "r", "s"][..]).prop_map(str::to_string)
}

fn small_term() -> BoxedStrategy<Term> {
    let leaf = prop_oneof![
        small_name().prop_map(Term::Var),
        (-2i64..=2).prop_map(|n| Term::Const(ratio(n, 1))),
        Just(Term::Const(ratio(1, 2))),
    ];
    leaf.prop_recursive(2, 8, 2, |t| {
        prop_oneof![
            (t.clone(), t.clone()).prop_map(|(a, b)| a.add(b)),
            (t.clone(), t.clone()).prop_map(|(a, b)| a.sub(b)),
            (t.clone(), t.clone()).prop_map(|(a, b)| a.mul(b)),
            t.clone().prop_map(Term::neg),
            t.prop_map(|a| a.pow(2)),
        ]
    })
    .boxed()
}

fn small_fol() -> BoxedStrategy<FolFormula> {
    let atom = (cmp_op(), small_term(), small_term()).prop_map(|(op, a, b)| FolFormula::Cmp(op, a, b));
    atom.prop_recursive(1, 4, 2, |f| {
        prop_oneof![
            f.clone().prop_map(FolFormula::not),
            (f.clone(), f.clone()).prop_map(|(a, b)| a.and(b)),
            (f.clone(), f).prop_map(|(a, b)| a.or(b)),
        ]
    })
    .boxed()
}

fn small_program() -> BoxedStrategy<HybridProgram> {
    let leaf = prop_oneof![
        2 => (small_name(), small_term()).prop_map(|(x, e)| HybridProgram::assign(x, e)),
        2 => prop::sample::select(&SMALL_RANDOM[..]).prop_map(|r| HybridProgram::RandomAssign(r.to_string())),
        1 => small_fol().prop_map(HybridProgram::test),
    ];
    leaf.prop_recursive(2, 6, 2, |p| {
        prop_oneof![
            (p.clone(), p.clone()).prop_map(|(a, b)| a.choice(b)),
            (p.clone(), p).prop_map(|(a, b)| a.seq(b)),
        ]
    })
    .boxed()
}

fn small_dl() -> BoxedStrategy<DlFormula> {
    let leaf = small_fol().prop_map(DlFormula::Lifted);
    leaf.prop_recursive(3, 8, 2, |g| {
        prop_oneof![
            2 => (small_program(), g.clone()).prop_map(|(p, q)| DlFormula::boxed(p, q)),
            2 => (small_program(), g.clone()).prop_map(|(p, q)| DlFormula::diamond(p, q)),
            1 => g.clone().prop_map(DlFormula::not),
            1 => (g.clone(), g.clone()).prop_map(|(a, b)| a.and(b)),
            1 => (g.clone(), g.clone()).prop_map(|(a, b)| a.or(b)),
            1 => (g.clone(), g).prop_map(|(a, b)| a.implies(b)),
        ]
    })
    .boxed()
}

/// Closed obligations whose outer quantifiers cover `x` and every other
/// variable the matrix reads. The outer grid has at most 7^3 * 4^2 points
/// and every random assignment draws from a finite range, so the search
/// can enumerate them completely.
pub fn small_obligation() -> BoxedStrategy<Obligation> {
    (small_dl(), any::<bool>())
        .prop_map(|(matrix, universal)| {
            let read = matrix.read_variables();
            let search_box: Vec<(String, SearchRange)> = SMALL_OUTER
                .iter()
                .map(|v| (v, small_outer_range()))
                .chain(SMALL_RANDOM.iter().map(|v| (v, small_random_range())))
                .filter(|(v, _)| **v == "x" || read.contains(**v))
                .map(|(v, r)| (v.to_string(), r))
                .collect();
            let mut formula = matrix;
            for (v, _) in search_box.iter().rev() {
                formula = if universal { DlFormula::forall(v.clone(), formula) } else { DlFormula::exists(v.clone(), formula) };
            }
            let inner_ranges: BTreeMap<String, SearchRange> = SMALL_RANDOM.iter().map(|v| (v.to_string(), small_random_range())).collect();
            Obligation {
                name: "small".into(),
                formula: formula.normalize(),
                kind: if universal { ObligationKind::FalsifyUniversal } else { ObligationKind::FindWitness },
                search_box,
                fixed_constants: BTreeMap::new(),
                inner_ranges,
                variables: Arc::new(VarTable::new(SMALL_OUTER.iter().chain(SMALL_RANDOM.iter()).copied())),
            }
        })
        .boxed()
}
