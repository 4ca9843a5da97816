use std::collections::BTreeMap;
use std::fmt::Write as _;

use hpcheck::checker::{Counterexample, Table2Report, Verdict, CAVEAT};
use hpcheck::obligations::Obligation;
use hpcheck::real::format_rational;
use serde::Serialize;

/// Bumped whenever the JSON layout changes.
pub const SCHEMA: u32 = 1;

#[derive(Serialize)]
pub struct ModelInfo {
    pub source: String,
    pub sha256: String,
}

#[derive(Serialize, Default)]
pub struct ConfigEcho {
    pub seed: u64,
    pub budget: u64,
    pub boxes: BTreeMap<String, String>,
    pub constants: BTreeMap<String, String>,
}

impl ConfigEcho {
    pub fn new(seed: u64, budget: u64) -> ConfigEcho {
        ConfigEcho { seed, budget, ..ConfigEcho::default() }
    }

    /// Record the effective ranges and constants of `o`.
    pub fn absorb(&mut self, o: &Obligation) {
        for (v, r) in o.search_box.iter().map(|(v, r)| (v, r)).chain(o.inner_ranges.iter()) {
            self.boxes.entry(v.clone()).or_insert_with(|| r.to_string());
        }
        for (c, v) in &o.fixed_constants {
            self.constants.entry(c.clone()).or_insert_with(|| format_rational(v));
        }
    }
}

#[derive(Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigEcho>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table2: Option<Table2Report>,
    pub exit_code: u8,
}

impl RunReport {
    pub fn new(command: &'static str) -> RunReport {
        RunReport {
            schema: SCHEMA,
            tool: "hpcheck",
            version: env!("CARGO_PKG_VERSION"),
            command,
            model: None,
            config: None,
            verdicts: Vec::new(),
            simulation: None,
            table2: None,
            exit_code: 0,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn header(report: &RunReport) -> String {
    let mut out = format!("{} {}", report.tool, report.version);
    if let Some(m) = &report.model {
        let _ = write!(out, "  model {} (sha256 {})", m.source, &m.sha256[..16]);
    }
    out.push('\n');
    if let Some(c) = &report.config {
        let _ = writeln!(out, "seed {}  budget {}", c.seed, c.budget);
        if !c.boxes.is_empty() {
            let boxes: Vec<String> = c.boxes.iter().map(|(v, r)| format!("{v} in {r}")).collect();
            let _ = writeln!(out, "boxes: {}", boxes.join(", "));
        }
        if !c.constants.is_empty() {
            let cs: Vec<String> = c.constants.iter().map(|(n, v)| format!("{n}={v}")).collect();
            let _ = writeln!(out, "constants: {}", cs.join(", "));
        }
    }
    out
}

pub fn certificate_text(cx: &Counterexample, indent: &str) -> String {
    let mut out = String::new();
    let values: Vec<String> = cx.assignment.iter().map(|(n, v)| format!("{n}={v}")).collect();
    let _ = writeln!(out, "{indent}state: {}", values.join(" "));
    for (i, s) in cx.scripts.iter().enumerate() {
        let _ = writeln!(out, "{indent}script {}: {}", i + 1, s.lines().join("; "));
    }
    if let Some((formula, truth)) = &cx.innermost {
        let _ = writeln!(out, "{indent}innermost: {formula} is {truth}");
    }
    let margin = if cx.margin.is_finite() { format!("{:.6}", cx.margin) } else { "exact tie".into() };
    let _ = writeln!(out, "{indent}certified {} (search margin {margin})", if cx.exact { "exactly" } else { "numeric only" });
    out
}

pub fn verdict_table(verdicts: &[Verdict]) -> String {
    let width = verdicts.iter().map(|v| v.obligation.len()).max().unwrap_or(10).max(10);
    let mut out = format!("{:<width$}  {:<16}  {:<22}  {}\n", "obligation", "kind", "verdict", "evaluations");
    for v in verdicts {
        let _ = writeln!(out, "{:<width$}  {:<16}  {:<22}  {}", v.obligation, v.kind.to_string(), v.outcome.phrase(), v.stats.evaluations);
        if let Some(cx) = &v.certificate {
            out.push_str(&certificate_text(cx, "    "));
        }
    }
    out
}

pub fn table2_text(t: &Table2Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<2} {:<5} {:<6} {:<13} {:<5} {:<40} {:<5} {:<40} match",
        "#", "model", "inv", "conjuncts", "want", "expected reason", "ours", "our diagnosis"
    );
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{:<2} {:<5} {:<6} {:<13} {:<5} {:<40} {:<5} {:<40} {}",
            r.index,
            r.model,
            r.invariant,
            r.conjuncts,
            r.expected,
            r.expected_reason,
            r.verdict,
            r.reason,
            if r.matches { "ok" } else { "MISMATCH" }
        );
        for item in &r.results {
            for v in &item.verdicts {
                let _ = writeln!(out, "     {:<36} {:<22} {}", v.obligation, v.outcome.phrase(), v.stats.evaluations);
            }
            if let Some(d) = &item.derived {
                let _ = writeln!(out, "     {:<36} {:<22} derived", d.obligation, d.outcome.phrase());
            }
        }
    }
    let _ = writeln!(out, "{}/{} rows match", t.matched, t.rows.len());
    let _ = writeln!(out, "caveat: {CAVEAT}");
    out
}
