//! Obligation suites: several obligations per invariant candidate, folded
//! into a Yes/No row with a diagnosis.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check, derive_not_chi, CheckError, Outcome, SearchConfig, Verdict};
use crate::model::Model;
use crate::obligations::{Generator, Obligation, ObligationSettings};
use crate::parser::parse_term;

pub const CAVEAT: &str = "\"Yes\" means no counterexample or missing witness was found within the search budget and boxes; it is not a proof of validity.";

/// One kind of obligation in a suite.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteItem {
    /// The three loop-rule branches.
    Loop,
    Gamma,
    Rho,
    Exploit,
    Chi,
    NotChi,
    /// Witness of a challenged controller for `invariant` with `var := term`.
    Psi { invariant: String, var: String, term: String },
    Friendly,
}

impl SuiteItem {
    pub fn label(&self) -> String {
        match self {
            SuiteItem::Loop => "loop".into(),
            SuiteItem::Gamma => "gamma".into(),
            SuiteItem::Rho => "rho".into(),
            SuiteItem::Exploit => "exploit".into(),
            SuiteItem::Chi => "chi".into(),
            SuiteItem::NotChi => "not_chi".into(),
            SuiteItem::Psi { invariant, var, term } => format!("psi[{invariant}; {var} := {term}]"),
            SuiteItem::Friendly => "friendly".into(),
        }
    }

    fn obligations(&self, g: &Generator, invariant: &str) -> Result<Vec<Obligation>, CheckError> {
        let zeta = g.invariant(invariant)?;
        Ok(match self {
            SuiteItem::Loop => g.loop_obligations(invariant, zeta)?,
            SuiteItem::Gamma => vec![g.gamma_obligation(invariant, zeta)?],
            SuiteItem::Rho => vec![g.rho_obligation(invariant, zeta)?],
            SuiteItem::Exploit => vec![g.exploit_witness(invariant, zeta)?],
            SuiteItem::Chi => vec![g.chi_obligation(invariant, zeta)?.0],
            SuiteItem::NotChi => vec![g.chi_obligation(invariant, zeta)?.1],
            SuiteItem::Psi { invariant: name, var, term } => {
                let t = parse_term(term).map_err(|e| CheckError::Suite(format!("psi term `{term}`: {e}")))?;
                vec![g.psi_obligation(name, g.invariant(name)?, var, &t)?]
            }
            SuiteItem::Friendly => vec![g.friendliness_probe()?],
        })
    }

    /// Why a row is "No" given this item's verdicts, if it is.
    fn diagnosis(&self, verdicts: &[Verdict]) -> Option<&'static str> {
        let found = |i: usize| verdicts.get(i).is_some_and(|v| v.outcome.is_finding());
        match self {
            SuiteItem::Loop if found(0) => Some("Invariant not implied by init"),
            SuiteItem::Loop if found(1) => Some("Controller does not fulfill requirement"),
            SuiteItem::Loop if found(2) => Some("Invariant does not imply guarantee"),
            SuiteItem::Gamma if found(0) => Some("Controller does not fulfill requirement"),
            SuiteItem::Rho if found(0) => Some("Invariant not strong enough"),
            SuiteItem::Exploit if found(0) => Some("Exploiting controller"),
            SuiteItem::Chi if !found(0) => Some("Invariant preserved without controller"),
            SuiteItem::NotChi if !found(0) => Some("Invariant preserved without controller"),
            SuiteItem::Psi { .. } if !found(0) => Some("Unchallenged controller"),
            _ => None,
        }
    }
}

/// Obligations to check for one invariant candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub invariant: String,
    pub items: Vec<SuiteItem>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ItemResult {
    pub item: String,
    pub verdicts: Vec<Verdict>,
    /// A `not_chi` witness obtained from a `psi` witness of the same row
    /// when the direct search found none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived: Option<Verdict>,
}

impl ItemResult {
    fn effective(&self) -> Vec<Verdict> {
        match &self.derived {
            Some(d) => vec![d.clone()],
            None => self.verdicts.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub invariant: String,
    pub results: Vec<ItemResult>,
    /// "Yes" or "No".
    pub verdict: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// Obligations of every entry, in order, with their item positions.
fn plan(model: &Model, entries: &[SuiteEntry], settings: &ObligationSettings) -> Result<Vec<Vec<(SuiteItem, Vec<Obligation>)>>, CheckError> {
    let g = Generator::new(model, settings.clone())?;
    entries
        .iter()
        .map(|e| e.items.iter().map(|item| Ok((item.clone(), item.obligations(&g, &e.invariant)?))).collect())
        .collect()
}

fn fold_row(invariant: &str, items: &[(SuiteItem, Vec<Obligation>)], verdicts: Vec<Vec<Verdict>>) -> ReportRow {
    let mut results: Vec<ItemResult> =
        items.iter().zip(verdicts).map(|((item, _), verdicts)| ItemResult { item: item.label(), verdicts, derived: None }).collect();
    let psi = items
        .iter()
        .zip(&results)
        .filter(|((item, _), _)| matches!(item, SuiteItem::Psi { .. }))
        .find_map(|(_, r)| r.verdicts.first().filter(|v| v.outcome == Outcome::WitnessFound).cloned());
    for ((item, obs), r) in items.iter().zip(results.iter_mut()) {
        if *item != SuiteItem::NotChi || r.verdicts[0].outcome == Outcome::WitnessFound {
            continue;
        }
        let Some(psi) = &psi else { continue };
        let Some(cx) = &psi.certificate else { continue };
        match derive_not_chi(cx, &obs[0]) {
            Ok(cx) => {
                let mut v = r.verdicts[0].clone();
                v.outcome = Outcome::WitnessFound;
                v.certificate = Some(cx);
                v.obligation = format!("{} (from {})", v.obligation, psi.obligation);
                r.derived = Some(v);
            }
            Err(e) => log::debug!("no not_chi witness from {}: {e}", psi.obligation),
        }
    }
    let reason = items.iter().zip(&results).find_map(|((item, _), r)| item.diagnosis(&r.effective()));
    ReportRow {
        invariant: invariant.to_string(),
        results,
        verdict: if reason.is_some() { "No" } else { "Yes" }.to_string(),
        reason: reason.unwrap_or("").to_string(),
    }
}

/// Check every entry against `model`. Deterministic given the seed.
pub fn check_suite(model: &Model, entries: &[SuiteEntry], settings: &ObligationSettings, cfg: &SearchConfig) -> Result<Report, CheckError> {
    let planned = plan(model, entries, settings)?;
    let mut rows = Vec::new();
    for (entry, items) in entries.iter().zip(&planned) {
        let verdicts = items.iter().map(|(_, obs)| obs.iter().map(|o| check(o, cfg)).collect::<Result<Vec<_>, _>>()).collect::<Result<Vec<_>, _>>()?;
        rows.push(fold_row(&entry.invariant, items, verdicts));
    }
    Ok(Report { rows })
}

/// Expected outcome of a suite row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub model: String,
    pub invariant: String,
    /// Display label of the added conjuncts, "-" for none.
    pub conjuncts: String,
    pub items: Vec<SuiteItem>,
    pub expected: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table2Row {
    pub index: usize,
    pub model: String,
    pub invariant: String,
    pub conjuncts: String,
    pub expected: String,
    pub expected_reason: String,
    pub verdict: String,
    pub reason: String,
    pub matches: bool,
    pub results: Vec<ItemResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table2Report {
    pub seed: u64,
    pub budget: u64,
    pub caveat: String,
    pub rows: Vec<Table2Row>,
    pub matched: usize,
    pub all_match: bool,
}

fn memo_key(o: &Obligation) -> String {
    format!("{}|{:?}|{:?}|{:?}", o.text(), o.search_box, o.fixed_constants, o.inner_ranges)
}

/// Run the suite rows on `workers` threads. Identical obligations are
/// checked once; the report does not depend on the worker count.
pub fn run_table2(
    rows: &[SuiteRow],
    models: impl Fn(&str) -> Option<Model>,
    settings: &ObligationSettings,
    cfg: &SearchConfig,
    workers: usize,
) -> Result<Table2Report, CheckError> {
    let mut planned = Vec::new();
    for row in rows {
        let model = models(&row.model).ok_or_else(|| CheckError::Suite(format!("unknown model `{}`", row.model)))?;
        let entry = SuiteEntry { invariant: row.invariant.clone(), items: row.items.clone() };
        planned.push(plan(&model, std::slice::from_ref(&entry), settings)?.remove(0));
    }
    let mut unique: Vec<&Obligation> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for items in &planned {
        for o in items.iter().flat_map(|(_, obs)| obs) {
            index.entry(memo_key(o)).or_insert_with(|| {
                unique.push(o);
                unique.len() - 1
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| CheckError::Suite(e.to_string()))?;
    let verdicts: Vec<Verdict> = pool.install(|| unique.par_iter().map(|o| check(o, cfg)).collect::<Result<_, _>>())?;
    let mut out = Vec::new();
    for (i, (row, items)) in rows.iter().zip(&planned).enumerate() {
        let per_item = items
            .iter()
            .map(|(_, obs)| {
                obs.iter()
                    .map(|o| {
                        let mut v = verdicts[index[&memo_key(o)]].clone();
                        v.obligation = o.name.clone();
                        v
                    })
                    .collect()
            })
            .collect();
        let r = fold_row(&row.invariant, items, per_item);
        let matches = r.verdict == row.expected && (r.verdict == "Yes" || r.reason == row.reason);
        out.push(Table2Row {
            index: i + 1,
            model: row.model.clone(),
            invariant: row.invariant.clone(),
            conjuncts: row.conjuncts.clone(),
            expected: row.expected.clone(),
            expected_reason: row.reason.clone(),
            verdict: r.verdict,
            reason: r.reason,
            matches,
            results: r.results,
        });
    }
    let matched = out.iter().filter(|r| r.matches).count();
    Ok(Table2Report { seed: cfg.seed, budget: cfg.budget, caveat: CAVEAT.to_string(), all_match: matched == out.len(), matched, rows: out })
}
