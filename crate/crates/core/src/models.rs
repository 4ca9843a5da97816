//! The bundled vehicle models, invariant candidates and the eight-row suite.

use serde::Deserialize;

use crate::checker::SuiteRow;
use crate::model::Model;
use crate::parser::{parse_model_with_fragments, ParseError};

pub const M2: &str = include_str!("../../../models/m2.hpmodel");
pub const M3: &str = include_str!("../../../models/m3.hpmodel");
pub const M4: &str = include_str!("../../../models/m4.hpmodel");
pub const INVARIANTS: &str = include_str!("../../../models/invariants.hpfrag");
pub const FIG2_SCRIPT: &str = include_str!("../../../models/fig2.script");
pub const TABLE2: &str = include_str!("../../../models/suite_table2.json");

pub const IDS: [&str; 3] = ["m2", "m3", "m4"];

pub fn source(id: &str) -> Option<&'static str> {
    match id {
        "m2" => Some(M2),
        "m3" => Some(M3),
        "m4" => Some(M4),
        _ => None,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown model `{0}` (expected m2, m3 or m4)")]
    UnknownModel(String),
    #[error("bundled model `{0}`: {1}")]
    Parse(String, ParseError),
}

/// A bundled model with the shared invariants and relation merged in.
pub fn builtin(id: &str) -> Result<Model, CatalogError> {
    let text = source(id).ok_or_else(|| CatalogError::UnknownModel(id.to_string()))?;
    parse_model_with_fragments(text, &[INVARIANTS]).map_err(|e| CatalogError::Parse(id.to_string(), e))
}

#[derive(Deserialize)]
struct SuiteFile {
    rows: Vec<SuiteRow>,
}

/// The eight rows with their expected verdicts and reasons.
pub fn table2_suite() -> Vec<SuiteRow> {
    let file: SuiteFile = serde_json::from_str(TABLE2).expect("bundled suite file is valid");
    file.rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{FolFormula, HybridProgram, OdeSystem, Term};
    use crate::model::Domain;
    use crate::parser::{parse_fol, print_model};

    fn v(n: &str) -> Term {
        Term::var(n)
    }

    fn c(k: i64) -> Term {
        Term::int(k)
    }

    fn env() -> HybridProgram {
        // xc := *; ?(xc - x >= v^2/(2*anmin))
        HybridProgram::random("xc").seq(HybridProgram::test(v("xc").sub(v("x")).ge(v("v").pow(2).div(c(2).mul(v("anmin"))))))
    }

    fn plant() -> HybridProgram {
        let ode = OdeSystem {
            equations: vec![("x".into(), v("v")), ("v".into(), v("a")), ("tau".into(), c(1))],
            domain: v("v").ge(c(0)).and(v("tau").le(v("T"))),
        };
        HybridProgram::assign("tau", c(0)).seq(HybridProgram::Ode(ode))
    }

    fn safe_m2() -> FolFormula {
        let reach = v("v").mul(v("T")).add(v("anmax").mul(v("T").pow(2)).div(c(2)));
        v("xc").sub(v("x")).ge(reach)
    }

    fn ctrl(safe: FolFormula) -> HybridProgram {
        let brake = HybridProgram::random("a").seq(HybridProgram::test(v("a").eq(v("asmin").neg())));
        crate::ast::desugar_if(safe.not(), brake)
    }

    fn aux_m2() -> HybridProgram {
        HybridProgram::random("a").seq(HybridProgram::test(v("anmin").neg().le(v("a")).and(v("a").le(v("anmax")))))
    }

    #[test]
    fn golden_m2() {
        let m = builtin("m2").unwrap();
        assert_eq!(m.env, env());
        assert_eq!(m.aux, aux_m2());
        assert_eq!(m.ctrl, ctrl(safe_m2()));
        assert_eq!(m.plant, plant());
        assert_eq!(m.guarantee, v("x").le(v("xc")));
    }

    #[test]
    fn golden_m3_adds_req_to_aux() {
        let m = builtin("m3").unwrap();
        let vt = v("v").add(v("a").mul(v("T")));
        let req = vt.clone().ge(c(0)).implies(v("v").mul(v("T")).add(v("a").mul(v("T").pow(2)).div(c(2))).le(v("v").pow(2).div(c(2).mul(v("anmin")))));
        let req2 = vt.lt(c(0)).implies(v("a").le(v("anmin").neg()));
        let bounds = v("anmin").neg().le(v("a")).and(v("a").le(v("anmax")));
        let aux = HybridProgram::random("a").seq(HybridProgram::test(bounds.and(req).and(req2)));
        assert_eq!(m.aux, aux);
        let m2 = builtin("m2").unwrap();
        assert_eq!((&m.env, &m.ctrl, &m.plant), (&m2.env, &m2.ctrl, &m2.plant));
    }

    #[test]
    fn golden_m4_safe_looks_ahead() {
        let m = builtin("m4").unwrap();
        let ahead = v("v").add(v("anmax").mul(v("T"))).pow(2).div(c(2).mul(v("anmin")));
        let reach = v("v").mul(v("T")).add(v("anmax").mul(v("T").pow(2)).div(c(2))).add(ahead);
        assert_eq!(m.ctrl, ctrl(v("xc").sub(v("x")).ge(reach)));
        let m2 = builtin("m2").unwrap();
        assert_eq!((&m.env, &m.aux, &m.plant, &m.init), (&m2.env, &m2.aux, &m2.plant, &m2.init));
    }

    #[test]
    fn catalog_shape_and_constants() {
        for id in IDS {
            let m = builtin(id).unwrap();
            assert!(!m.nonstandard_shape(), "{id}");
            let reparsed = parse_model_with_fragments(&print_model(&m), &[]).unwrap();
            assert_eq!(reparsed.env, m.env);
            assert_eq!(reparsed.ctrl, m.ctrl);
            assert_eq!(reparsed.invariants, m.invariants);
            let k = m.constant_values();
            let n = |s: &str| k[s].clone();
            let r = |x: i64| num_rational::BigRational::from_integer(x.into());
            assert!(n("asmin") > n("anmin") && n("T") > r(0) && n("anmax") > r(0), "{id}");
            assert_eq!(n("T"), r(1));
            assert_eq!(n("anmax"), r(2));
            assert_eq!(n("anmin"), r(3));
            assert_eq!(n("asmin"), r(4));
            assert!(matches!(m.domain("xc_next"), Some(Domain::Interval { .. })));
            assert!(m.relation.is_some());
            for name in ["zeta1", "zeta2", "zeta_iter"] {
                assert!(m.invariant(name).is_some(), "{id} {name}");
            }
        }
        assert!(matches!(builtin("m1"), Err(CatalogError::UnknownModel(_))));
    }

    #[test]
    fn invariants_as_written() {
        let m = builtin("m2").unwrap();
        assert_eq!(m.invariant("zeta1").unwrap(), &parse_fol("x <= xc").unwrap());
        assert_eq!(m.invariant("zeta2").unwrap(), &v("v").pow(2).le(c(2).mul(v("anmin")).mul(v("xc").sub(v("x")))));
    }

    #[test]
    fn table2_rows() {
        let rows = table2_suite();
        assert_eq!(rows.len(), 8);
        let expected: Vec<&str> = rows.iter().map(|r| r.expected.as_str()).collect();
        assert_eq!(expected, ["Yes", "No", "No", "Yes", "No", "Yes", "No", "Yes"]);
        assert_eq!(rows[1].reason, "Invariant not strong enough");
        assert_eq!(rows[3].reason, "Unchallenged controller");
        assert_eq!((rows[7].model.as_str(), rows[7].invariant.as_str()), ("m4", "zeta2"));
    }
}
