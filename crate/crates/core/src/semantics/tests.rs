use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use super::*;
use crate::ast::{FolFormula, HybridProgram, OdeSystem};
use crate::model::Model;
use crate::parser::{parse_fol, parse_model, parse_program, parse_term};
use crate::real::Real;

fn q(n: i64, d: i64) -> Real {
    Real::Exact(BigRational::new(BigInt::from(n), BigInt::from(d)))
}

fn m2() -> Model {
    parse_model(include_str!("../../../../models/m2.hpmodel")).unwrap()
}

fn state_of(model: &Model, pairs: &[(&str, Real)]) -> State<Real> {
    let vars = Arc::new(VarTable::new(model.state_names()));
    let mut s = State::zeros(vars);
    for c in &model.constants {
        s = s.with(&c.name, Real::Exact(c.value.clone())).unwrap();
    }
    for (n, v) in pairs {
        s = s.with(n, v.clone()).unwrap();
    }
    s
}

fn omega0(model: &Model) -> State<Real> {
    state_of(model, &[("x", q(0, 1)), ("v", q(0, 1)), ("xc", q(1, 1)), ("a", q(9, 5)), ("tau", q(0, 1))])
}

fn env_test(model: &Model) -> FolFormula {
    match &model.env {
        HybridProgram::Seq(_, t) => match &**t {
            HybridProgram::Test(f) => f.clone(),
            _ => unreachable!(),
        },
        _ => unreachable!(),
    }
}

fn small(pairs: &[(&str, i64, i64)]) -> State<Real> {
    let vars = Arc::new(VarTable::new(pairs.iter().map(|p| p.0)));
    let values = pairs.iter().map(|p| q(p.1, p.2)).collect();
    State::new(vars, values)
}

fn ode(text: &str) -> OdeSystem {
    match parse_program(text).unwrap() {
        HybridProgram::Ode(o) => o,
        _ => panic!("not an ODE"),
    }
}

const PLANT: &str = "{x' = v, v' = a, tau' = 1 & v >= 0 & tau <= T}";

#[test]
fn exact_term_evaluation() {
    let s = small(&[("v", 9, 5), ("anmin", 3, 1)]);
    assert_eq!(eval_term(&s, &parse_term("v^2/(2*anmin)").unwrap()).unwrap(), q(27, 50));
    assert_eq!(eval_term(&s, &parse_term("7/2").unwrap()).unwrap(), q(7, 2));
    let z = small(&[("x", 0, 1), ("v", 0, 1), ("T", 1, 1)]);
    assert_eq!(eval_term(&z, &parse_term("x + v*T").unwrap()).unwrap(), q(0, 1));
    assert!(matches!(eval_term(&s, &parse_term("w + 1").unwrap()), Err(SemanticsError::UndeclaredVariable(_))));
    assert_eq!(eval_term(&s, &parse_term("v/(anmin - 3)").unwrap()), Err(SemanticsError::DivisionByZero));
}

#[test]
fn walkthrough_tests_and_margins() {
    let m = m2();
    let w0 = omega0(&m);
    let safe = parse_fol("xc - x >= v*T + anmax*T^2/2").unwrap();
    assert!(eval_fol(&w0, &safe).unwrap());
    assert_eq!(violation_margin(&w0, &safe).unwrap(), 0.0);
    let w1 = w0.with("x", q(9, 10)).unwrap().with("v", q(9, 5)).unwrap();
    let env = env_test(&m);
    assert!(!eval_fol(&w1, &env).unwrap());
    assert!((violation_margin(&w1, &env).unwrap() + 0.44).abs() < 1e-12);
    assert!(eval_fol(&w1, &FolFormula::True).unwrap());
    assert!(matches!(eval_fol(&w1, &parse_fol("forall y (y >= 0)").unwrap()), Err(SemanticsError::Quantifier(_))));
}

#[test]
fn closed_form_plant() {
    let m = m2();
    let opts = OdeOptions::default();
    let plant = ode(PLANT);
    let w0 = omega0(&m);
    let out = evolve_plant(&w0, &plant, &q(1, 1), &opts).unwrap();
    let f = out.final_state().unwrap();
    assert_eq!((f.get("x").unwrap(), f.get("v").unwrap(), f.get("tau").unwrap()), (&q(9, 10), &q(9, 5), &q(1, 1)));
    assert_eq!(evolve_plant(&w0, &plant, &q(0, 1), &opts).unwrap(), Outcome::Final(w0.clone()));

    let braking = small(&[("x", 0, 1), ("v", 2, 1), ("a", -4, 1), ("tau", 0, 1), ("T", 1, 1)]);
    assert!(evolve_plant(&braking, &plant, &q(3, 4), &opts).unwrap().is_aborted());
    let f = evolve_plant(&braking, &plant, &q(1, 2), &opts).unwrap();
    let f = f.final_state().unwrap();
    assert_eq!((f.get("x").unwrap(), f.get("v").unwrap()), (&q(1, 2), &q(0, 1)));
    assert!(matches!(evolve_plant(&braking, &plant, &q(-1, 1), &opts), Err(SemanticsError::NegativeDuration(_))));

    assert_eq!(max_admissible_duration(&w0, &plant, &opts).unwrap(), q(1, 1));
    let spent = w0.with("tau", q(1, 1)).unwrap();
    assert_eq!(max_admissible_duration(&spent, &plant, &opts).unwrap(), q(0, 1));
    assert_eq!(max_admissible_duration(&braking, &plant, &opts).unwrap(), q(1, 2));
}

#[test]
fn quadratic_domain_and_horizon() {
    let opts = OdeOptions::default();
    let s = small(&[("x", 0, 1), ("v", 0, 1), ("a", 2, 1)]);
    let sys = ode("{x' = v, v' = a & x <= 1}");
    assert_eq!(max_admissible_duration(&s, &sys, &opts).unwrap(), q(1, 1));
    assert!(evolve_plant(&s, &sys, &q(1, 1), &opts).unwrap().final_state().is_some());
    assert!(evolve_plant(&s, &sys, &q(101, 100), &opts).unwrap().is_aborted());
    // Irrational stopping time: sqrt(2/3).
    let s3 = s.with("a", q(3, 1)).unwrap();
    let t = max_admissible_duration(&s3, &sys, &opts).unwrap();
    assert!(!t.is_exact());
    assert!((t.to_f64() - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    // Domain that never binds: capped at the horizon.
    let free = ode("{x' = v, v' = a & v >= 0}");
    assert_eq!(max_admissible_duration(&s, &free, &opts).unwrap(), q(10, 1));
    // A parabola dipping below zero between t = 1 and t = 3.
    let dip = small(&[("y", 3, 1), ("w", -4, 1)]);
    let sys = ode("{y' = w, w' = 2 & y >= 0}");
    assert_eq!(max_admissible_duration(&dip, &sys, &opts).unwrap(), q(1, 1));
    // Violated at time zero.
    let neg = small(&[("y", -1, 1), ("w", 0, 1)]);
    assert_eq!(max_admissible_duration(&neg, &sys, &opts).unwrap(), q(0, 1));
}

#[test]
fn numeric_plant_matches_closed_form() {
    let numeric = OdeOptions { force_numeric: true, ..OdeOptions::default() };
    let plant = ode(PLANT);
    let braking = small(&[("x", 0, 1), ("v", 2, 1), ("a", -4, 1), ("tau", 0, 1), ("T", 1, 1)]);
    let f = evolve_plant(&braking, &plant, &q(2, 5), &numeric).unwrap();
    let f = f.final_state().unwrap();
    let exact_x = 2.0 * 0.4 - 2.0 * 0.16;
    assert!((f.get("x").unwrap().to_f64() - exact_x).abs() < 1e-9);
    assert!(!f.get("x").unwrap().is_exact());
    assert!(evolve_plant(&braking, &plant, &q(3, 4), &numeric).unwrap().is_aborted());
    let t = max_admissible_duration(&braking, &plant, &numeric).unwrap();
    assert!((t.to_f64() - 0.5).abs() < 1e-8);
    // Nonlinear flow: y' = y from 1 reaches e within domain y <= 10.
    let exp = small(&[("y", 1, 1)]);
    let sys = ode("{y' = y & y <= 10}");
    let f = evolve_plant(&exp, &sys, &q(1, 1), &OdeOptions::default()).unwrap();
    assert!((f.final_state().unwrap().get("y").unwrap().to_f64() - std::f64::consts::E).abs() < 1e-9);
    let t = max_admissible_duration(&exp, &sys, &OdeOptions::default()).unwrap();
    assert!((t.to_f64() - 10f64.ln()).abs() < 1e-6);
    let blow = small(&[("y", 1, 1)]);
    let sys = ode("{y' = y^3 & true}");
    assert!(matches!(evolve_plant(&blow, &sys, &q(5, 1), &OdeOptions::default()), Err(SemanticsError::NumericBlowUp(_))));
}

#[test]
fn walkthrough_replay() {
    let m = m2();
    let w0 = omega0(&m);
    let script = ChoiceScript::parse("random xc 1\nrandom a 1.8\nbranch right\nduration 1").unwrap();
    let (out, trace) = run(&w0, &m.loop_body(), &script).unwrap();
    let w1 = out.final_state().unwrap();
    assert_eq!((w1.get("x").unwrap(), w1.get("v").unwrap()), (&q(9, 10), &q(9, 5)));
    assert_eq!(trace.entries[0].construct.as_ref(), "init");
    assert_eq!(trace.last().time, q(1, 1));

    let (out, _) = run(w1, &m.env, &ChoiceScript::parse("random xc 1").unwrap()).unwrap();
    match out {
        Outcome::Aborted { test, .. } => assert_eq!(test, env_test(&m)),
        other => panic!("expected abort, got {other:?}"),
    }
    let looped = m.loop_body().repeat();
    let (out, _) = run(&w0, &looped, &ChoiceScript::parse("loop 0").unwrap()).unwrap();
    assert_eq!(out, Outcome::Final(w0.clone()));
}

#[test]
fn script_errors() {
    let m = m2();
    let w0 = omega0(&m);
    let err = run(&w0, &m.system(), &ChoiceScript::default()).unwrap_err();
    assert!(err.to_string().contains("LoopCount required"), "{err}");
    assert!(err.is_script_error());
    let err = run(&w0, &m.env, &ChoiceScript::parse("random xc 2\nbranch left").unwrap()).unwrap_err();
    assert_eq!(err, SemanticsError::Surplus { remaining: 1 });
    let err = run(&w0, &m.env, &ChoiceScript::parse("branch left").unwrap()).unwrap_err();
    assert!(matches!(err, SemanticsError::Mismatch { position: 0, .. }));
    let err = run(&w0, &m.env, &ChoiceScript::parse("random a 2").unwrap()).unwrap_err();
    assert!(matches!(err, SemanticsError::Mismatch { .. }));
    // Leftover decisions after an abort are fine.
    let w1 = w0.with("x", q(9, 10)).unwrap().with("v", q(9, 5)).unwrap();
    assert!(run(&w1, &m.env, &ChoiceScript::parse("random xc 1\nbranch left").unwrap()).unwrap().0.is_aborted());
}

#[test]
fn max_duration_decision() {
    let m = m2();
    let braking = state_of(&m, &[("v", q(2, 1)), ("a", q(-4, 1)), ("xc", q(5, 1))]);
    let plant = parse_program(&format!("tau := 0; {PLANT}")).unwrap();
    let (out, _) = run(&braking, &plant, &ChoiceScript::parse("duration max").unwrap()).unwrap();
    let f = out.final_state().unwrap();
    assert_eq!((f.get("x").unwrap(), f.get("v").unwrap()), (&q(1, 2), &q(0, 1)));
}

#[test]
fn if_semantics() {
    let m = m2();
    let w0 = omega0(&m);
    // The guard does not hold at w0, so only the right branch runs.
    let left = ChoiceScript::parse("branch left\nrandom a -4").unwrap();
    assert!(run(&w0, &m.ctrl, &left).unwrap().0.is_aborted());
    let (out, _) = run(&w0, &m.ctrl, &ChoiceScript::parse("branch right").unwrap()).unwrap();
    assert_eq!(out, Outcome::Final(w0.clone()));
}

fn small_state() -> impl Strategy<Value = State<Real>> {
    prop::collection::vec(-20i64..20, 3).prop_map(|v| small(&[("x", v[0], 2), ("y", v[1], 3), ("z", v[2], 1)]))
}

const TESTS: &[&str] = &["x >= y", "x + y = z", "x*x < z & y != 0", "!(x <= 1) | z > y", "x > 0 -> y > 0", "x = y <-> z >= 0"];

proptest! {
    #[test]
    fn test_aborts_iff_false(s in small_state(), i in 0..TESTS.len()) {
        let p = parse_fol(TESTS[i]).unwrap();
        let (out, _) = run(&s, &HybridProgram::test(p.clone()), &ChoiceScript::default()).unwrap();
        prop_assert_eq!(out.is_aborted(), !eval_fol(&s, &p).unwrap());
        if !out.is_aborted() {
            prop_assert_eq!(out, Outcome::Final(s));
        }
    }

    #[test]
    fn assignment_changes_only_target(s in small_state(), k in -5i64..5) {
        let prog = parse_program(&format!("y := x*{k} + z")).unwrap();
        let (out, _) = run(&s, &prog, &ChoiceScript::default()).unwrap();
        let f = out.final_state().unwrap().clone();
        prop_assert_eq!(f.get("x"), s.get("x"));
        prop_assert_eq!(f.get("z"), s.get("z"));
        let expected = eval_term(&s, &parse_term(&format!("x*{k} + z")).unwrap()).unwrap();
        prop_assert_eq!(f.get("y"), Some(&expected));
    }

    #[test]
    fn trace_time_monotone(v in 0i64..6, a in -6i64..6, d1 in 0i64..4, d2 in 0i64..4) {
        let s = small(&[("x", 0, 1), ("v", v, 1), ("a", a, 1), ("tau", 0, 1), ("T", 1, 1)]);
        let prog = parse_program(&format!("tau := 0; {PLANT}; x := x + 1; tau := 0; {PLANT}")).unwrap();
        let script = ChoiceScript::parse(&format!("duration {d1}/4\nduration {d2}/4")).unwrap();
        if let Ok((_, trace)) = run(&s, &prog, &script) {
            for w in trace.entries.windows(2) {
                let increasing = w[1].time.to_f64() >= w[0].time.to_f64();
                prop_assert!(increasing);
                if !w[1].construct.starts_with('{') {
                    prop_assert_eq!(&w[1].time, &w[0].time);
                }
            }
        }
    }
}
