use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::*;
use crate::ast::DlFormula;
use crate::model::Model;
use crate::models;
use crate::obligations::{Generator, Obligation, ObligationKind, ObligationSettings, SearchRange};
use crate::parser::{parse_formula, parse_term};
use crate::real::Real;
use crate::semantics::{Decision, Side};

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn point(v: BigRational) -> SearchRange {
    SearchRange::Interval { lo: v.clone(), hi: v }
}

fn cfg(budget: u64) -> SearchConfig {
    SearchConfig { budget, ..SearchConfig::default() }
}

fn obligation(model: &Model, settings: ObligationSettings, item: &str, invariant: &str) -> Obligation {
    let g = Generator::new(model, settings).unwrap();
    let zeta = g.invariant(invariant).unwrap();
    match item {
        "rho" => g.rho_obligation(invariant, zeta).unwrap(),
        "loop(ii)" => g.loop_obligations(invariant, zeta).unwrap().remove(1),
        "loop(iii)" => g.loop_obligations(invariant, zeta).unwrap().remove(2),
        "chi" => g.chi_obligation(invariant, zeta).unwrap().0,
        "exploit" => g.exploit_witness(invariant, zeta).unwrap(),
        other => panic!("no obligation {other}"),
    }
}

fn exact(cx: &Counterexample, name: &str) -> BigRational {
    cx.value(name).and_then(Real::as_rational).cloned().unwrap_or_else(|| panic!("`{name}` is not exact"))
}

#[test]
fn rho1_falsified_in_the_walkthrough_state() {
    let m2 = models::builtin("m2").unwrap();
    let boxes = BTreeMap::from([
        ("x".to_string(), point(q(9, 10))),
        ("v".to_string(), point(q(9, 5))),
        ("xc".to_string(), point(q(1, 1))),
        ("xc_next".to_string(), point(q(1, 1))),
    ]);
    let ob = obligation(&m2, ObligationSettings { boxes, ..Default::default() }, "rho", "zeta1");
    let v = check(&ob, &cfg(1000)).unwrap();
    assert_eq!(v.outcome, Outcome::Falsified);
    let cx = v.certificate.as_ref().unwrap();
    assert_eq!(exact(cx, "x"), q(9, 10));
    assert_eq!(exact(cx, "v"), q(9, 5));
    assert_eq!(exact(cx, "xc"), q(1, 1));
    assert!(cx.exact);
    assert!(certify(cx, &ob));
}

#[test]
fn rho1_falsified_in_default_boxes() {
    let m2 = models::builtin("m2").unwrap();
    let ob = obligation(&m2, ObligationSettings::default(), "rho", "zeta1");
    let v = check(&ob, &cfg(200_000)).unwrap();
    assert_eq!(v.outcome, Outcome::Falsified);
    let cx = v.certificate.as_ref().unwrap();
    assert!(cx.exact && certify(cx, &ob));
    // The state satisfies zeta1 and the relation.
    assert!(exact(cx, "x") <= exact(cx, "xc"));
    assert!(exact(cx, "xc") <= exact(cx, "xc_next"));
}

#[test]
fn loop_step_zeta2_falsified_on_exploiting_controller() {
    let m2 = models::builtin("m2").unwrap();
    let ob = obligation(&m2, ObligationSettings::default(), "loop(ii)", "zeta2");
    let v = check(&ob, &cfg(200_000)).unwrap();
    assert_eq!(v.outcome, Outcome::Falsified);
    let cx = v.certificate.as_ref().unwrap();
    assert!(cx.exact && certify(cx, &ob));
    assert!(!cx.scripts.is_empty());
}

#[test]
fn valid_matrix_is_not_falsified() {
    let ranges = BTreeMap::from([("x".to_string(), SearchRange::interval(-3, 3))]);
    for text in ["forall x true", "forall x x*x >= 0"] {
        let ob = Obligation::from_formula("trivial", parse_formula(text).unwrap(), &ranges, BTreeMap::new());
        assert_eq!(ob.kind, ObligationKind::FalsifyUniversal);
        let v = check(&ob, &cfg(5000)).unwrap();
        assert_eq!(v.outcome, Outcome::NotFalsified, "{text}");
        assert!(v.certificate.is_none());
        assert!(v.stats.evaluations <= 5000);
    }
}

#[test]
fn finite_box_is_enumerated() {
    let ranges = BTreeMap::from([("x".to_string(), SearchRange::Finite(vec![q(0, 1), q(1, 1), q(2, 1)]))]);
    let ob = Obligation::from_formula("finite", parse_formula("forall x x <= 1").unwrap(), &ranges, BTreeMap::new());
    let v = check(&ob, &cfg(100)).unwrap();
    assert_eq!(v.outcome, Outcome::Falsified);
    assert_eq!(exact(v.certificate.as_ref().unwrap(), "x"), q(2, 1));
    let ok = Obligation::from_formula("finite", parse_formula("forall x x <= 2").unwrap(), &ranges, BTreeMap::new());
    let v = check(&ok, &cfg(100)).unwrap();
    assert_eq!(v.outcome, Outcome::NotFalsified);
    assert!(v.stats.exhaustive);
}

fn flip_first_branch(e: &mut Evidence) -> bool {
    match e {
        Evidence::Modal { script, post } => {
            for d in &mut script.decisions {
                if let Decision::Branch(side) = d {
                    *side = if *side == Side::Left { Side::Right } else { Side::Left };
                    return true;
                }
            }
            flip_first_branch(post)
        }
        Evidence::Both(a, b) => flip_first_branch(a) || flip_first_branch(b),
        Evidence::Left(a) | Evidence::Right(a) => flip_first_branch(a),
        Evidence::Quant { body, .. } => flip_first_branch(body),
        Evidence::Atom | Evidence::Decided { .. } | Evidence::Each { .. } => false,
    }
}

#[test]
fn tampered_script_fails_certification() {
    let m2 = models::builtin("m2").unwrap();
    let ob = obligation(&m2, ObligationSettings::default(), "loop(ii)", "zeta2");
    let v = check(&ob, &cfg(200_000)).unwrap();
    let mut cx = v.certificate.unwrap();
    assert!(certify(&cx, &ob));
    assert!(flip_first_branch(&mut cx.evidence), "no branch decision to flip");
    assert!(!certify(&cx, &ob));
}

#[test]
fn moved_assignment_fails_certification() {
    let m2 = models::builtin("m2").unwrap();
    let ob = obligation(&m2, ObligationSettings::default(), "rho", "zeta1");
    let mut cx = check(&ob, &cfg(200_000)).unwrap().certificate.unwrap();
    // Outside the box.
    for (name, value) in &mut cx.assignment {
        if name == "x" {
            *value = Real::Exact(q(100, 1));
        }
    }
    assert!(!certify(&cx, &ob));
}

#[test]
fn numeric_plant_certifies_numeric_only() {
    let m2 = models::builtin("m2").unwrap();
    let ob = obligation(&m2, ObligationSettings::default(), "loop(ii)", "zeta2");
    let mut config = cfg(200_000);
    config.ode.force_numeric = true;
    let v = check(&ob, &config).unwrap();
    assert_eq!(v.outcome, Outcome::Falsified);
    let cx = v.certificate.as_ref().unwrap();
    assert!(!cx.exact, "a forced numeric plant cannot certify exactly");
    assert!(certify(cx, &ob));
}

#[test]
fn deterministic_given_seed() {
    let m2 = models::builtin("m2").unwrap();
    for item in ["rho", "loop(ii)", "chi"] {
        let ob = obligation(&m2, ObligationSettings::default(), item, "zeta1");
        let config = SearchConfig { budget: 3000, seed: 11, ..SearchConfig::default() };
        let a = check(&ob, &config).unwrap();
        let b = check(&ob, &config).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap(), "{item}");
    }
}

#[test]
fn larger_budget_keeps_findings() {
    let m2 = models::builtin("m2").unwrap();
    for (item, invariant) in [("rho", "zeta1"), ("loop(ii)", "zeta2")] {
        let ob = obligation(&m2, ObligationSettings::default(), item, invariant);
        let small = check(&ob, &cfg(50)).unwrap();
        assert!(small.is_finding(), "{item} needs more than 50 evaluations");
        for budget in [100, 1000, 10_000] {
            assert!(check(&ob, &cfg(budget)).unwrap().is_finding(), "{item} at {budget}");
        }
    }
}

#[test]
fn findings_certify_the_dual_obligation() {
    // Falsifying forall psi and witnessing exists !psi are the same event, so
    // a certificate for one side must re-validate against the other.
    let m3 = models::builtin("m3").unwrap();
    let m2 = models::builtin("m2").unwrap();
    let cases = [(&m2, "rho", "zeta1"), (&m2, "loop(iii)", "zeta1"), (&m3, "chi", "zeta1"), (&m2, "exploit", "zeta1"), (&m2, "loop(ii)", "zeta2")];
    let mut transferred = 0;
    for (model, item, invariant) in cases {
        let ob = obligation(model, ObligationSettings::default(), item, invariant);
        let neg = ob.negated();
        assert_eq!(neg.kind, ob.kind.dual());
        for seed in [0, 1] {
            let config = SearchConfig { budget: 4000, seed, ..SearchConfig::default() };
            for (a, b) in [(&ob, &neg), (&neg, &ob)] {
                let v = check(a, &config).unwrap();
                if let Some(cx) = &v.certificate {
                    assert!(certify(cx, b), "{} seed {seed}", a.name);
                    transferred += 1;
                }
            }
        }
    }
    assert!(transferred > 0);
}

#[test]
fn exhaustive_verdicts_of_duals_agree() {
    let ranges = BTreeMap::from([("x".to_string(), SearchRange::Finite((-3..=3).map(|k| q(k, 1)).collect()))]);
    for text in ["forall x x*x >= x", "forall x x*x != 2", "forall x (x > 0 -> x >= 1)", "forall x x <= 2"] {
        let ob = Obligation::from_formula("f", parse_formula(text).unwrap(), &ranges, BTreeMap::new());
        let a = check(&ob, &cfg(100)).unwrap();
        let b = check(&ob.negated(), &cfg(100)).unwrap();
        assert_eq!(a.is_finding(), b.is_finding(), "{text}");
        // Without a finding the whole box was covered.
        assert!(a.is_finding() || (a.stats.exhaustive && b.stats.exhaustive), "{text}");
    }
}

#[test]
fn config_validation() {
    assert!(SearchConfig { budget: 0, ..SearchConfig::default() }.validate().is_err());
    assert!(SearchConfig { duration_samples: 1, ..SearchConfig::default() }.validate().is_err());
    assert!(SearchConfig::default().validate().is_ok());
}

#[test]
fn uncovered_symbol_is_an_error() {
    let f = DlFormula::Lifted(parse_formula("forall x x >= y").unwrap().as_fol().unwrap().clone());
    let ranges = BTreeMap::from([("x".to_string(), SearchRange::interval(0, 1))]);
    let ob = Obligation::from_formula("open", f, &ranges, BTreeMap::new());
    assert!(matches!(check(&ob, &cfg(10)), Err(CheckError::Uncoverable(_))));
}

#[test]
fn verdict_json_shape() {
    let m2 = models::builtin("m2").unwrap();
    let ob = obligation(&m2, ObligationSettings::default(), "rho", "zeta1");
    let v = check(&ob, &cfg(1000)).unwrap();
    let json = serde_json::to_value(&v).unwrap();
    for key in ["obligation", "kind", "verdict", "evaluations", "seed", "certificate"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    for key in ["assignment", "scripts", "margin", "exact"] {
        assert!(json["certificate"].get(key).is_some(), "missing certificate.{key}");
    }
}

fn small_cfg() -> SearchConfig {
    cfg(20_000)
}

#[test]
fn suite_row_preserved_without_controller() {
    let m3 = models::builtin("m3").unwrap();
    let entries = [SuiteEntry { invariant: "zeta1".into(), items: vec![SuiteItem::Loop, SuiteItem::NotChi] }];
    let report = check_suite(&m3, &entries, &ObligationSettings::default(), &small_cfg()).unwrap();
    let row = &report.rows[0];
    assert_eq!(row.verdict, "No");
    assert_eq!(row.reason, "Invariant preserved without controller");
    assert!(row.results[0].verdicts.iter().all(|v| v.outcome == Outcome::NotFalsified));
    assert_eq!(row.results[1].verdicts[0].outcome, Outcome::NoWitnessFound);
}

#[test]
fn suite_row_challenged_controller_is_yes() {
    let m4 = models::builtin("m4").unwrap();
    let psi = SuiteItem::Psi { invariant: "zeta_iter".into(), var: "a".into(), term: "-anmin".into() };
    let entries = [SuiteEntry { invariant: "zeta2".into(), items: vec![SuiteItem::Loop, SuiteItem::Rho, psi] }];
    let report = check_suite(&m4, &entries, &ObligationSettings::default(), &small_cfg()).unwrap();
    let row = &report.rows[0];
    assert_eq!((row.verdict.as_str(), row.reason.as_str()), ("Yes", ""));
    let psi = &row.results[2].verdicts[0];
    assert_eq!(psi.outcome, Outcome::WitnessFound);
    assert!(psi.certificate.as_ref().unwrap().exact);
}

#[test]
fn not_chi_derived_from_psi_certifies() {
    let m4 = models::builtin("m4").unwrap();
    let g = Generator::new(&m4, ObligationSettings::default()).unwrap();
    let zi = g.invariant("zeta_iter").unwrap();
    let psi = g.psi_obligation("zeta_iter", zi, "a", &parse_term("-anmin").unwrap()).unwrap();
    let (_, not_chi) = g.chi_obligation("zeta2", g.invariant("zeta2").unwrap()).unwrap();
    let w = check(&psi, &small_cfg()).unwrap();
    let cx = w.certificate.expect("psi witness");
    let derived = derive_not_chi(&cx, &not_chi).unwrap();
    assert!(derived.exact);
    assert!(certify(&derived, &not_chi));
}

#[test]
fn psi_instance_is_zeta2() {
    // zeta_iter with a := -anmin agrees with zeta2 on a grid of states.
    let m4 = models::builtin("m4").unwrap();
    let zi = m4.invariant("zeta_iter").unwrap().substitute("a", &parse_term("-anmin").unwrap());
    let z2 = m4.invariant("zeta2").unwrap().clone();
    let vars = std::sync::Arc::new(crate::semantics::VarTable::new(m4.state_names()));
    let mut base = crate::semantics::State::<Real>::zeros(vars);
    for c in &m4.constants {
        base = base.with(&c.name, Real::Exact(c.value.clone())).unwrap();
    }
    for x in -2..=10 {
        for v in 0..=10 {
            for xc in -2..=12 {
                let s = base
                    .with("x", Real::Exact(q(x, 2)))
                    .and_then(|s| s.with("v", Real::Exact(q(v, 2))))
                    .and_then(|s| s.with("xc", Real::Exact(q(xc, 2))))
                    .unwrap();
                let a = crate::semantics::eval_fol(&s, &zi).unwrap();
                let b = crate::semantics::eval_fol(&s, &z2).unwrap();
                assert_eq!(a, b, "x={x}/2 v={v}/2 xc={xc}/2");
            }
        }
    }
}

#[test]
fn empty_suite_gives_empty_report() {
    let m2 = models::builtin("m2").unwrap();
    let report = check_suite(&m2, &[], &ObligationSettings::default(), &small_cfg()).unwrap();
    assert!(report.rows.is_empty());
}

#[test]
fn unknown_invariant_is_an_error() {
    let m2 = models::builtin("m2").unwrap();
    let entries = [SuiteEntry { invariant: "zeta9".into(), items: vec![SuiteItem::Loop] }];
    assert!(check_suite(&m2, &entries, &ObligationSettings::default(), &small_cfg()).is_err());
}


