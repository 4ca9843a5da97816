use std::path::Path;
use std::sync::Arc;

use hpcheck::checker::{certify, check as check_obligation, run_table2, CheckError};
use hpcheck::model::Model;
use hpcheck::models;
use hpcheck::obligations::{Generator, ObligationError, Selector};
use hpcheck::parser::{parse_term, print_fol, print_model};
use hpcheck::real::{format_rational, Real};
use hpcheck::semantics::{eval_fol, run_with, OdeOptions, Outcome, ScriptFile, State, Trace, VarTable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::options::{load_model, parse_constants, sha256_hex, workers, CheckArgs, CliError, Format, OutputArgs, ParseArgs, SearchArgs, SimulateArgs};
use crate::random::Sampler;
use crate::report::{self, ConfigEcho, ModelInfo, RunReport};
use crate::Status;

fn emit(report: &mut RunReport, output: &OutputArgs, status: Status, text: String) -> Result<Status, CliError> {
    report.exit_code = status as u8;
    let json = report.to_json();
    if let Some(path) = &output.json_out {
        std::fs::write(path, &json).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    }
    match output.format {
        Format::Json => print!("{json}"),
        Format::Text => print!("{}{}", report::header(report), text),
    }
    Ok(status)
}

fn check_error(e: CheckError) -> CliError {
    CliError::usage(e.to_string())
}

pub fn parse(args: &ParseArgs) -> Result<Status, CliError> {
    let loaded = load_model(&args.model)?;
    let m = &loaded.model;
    let mut report = RunReport::new("parse");
    report.model = Some(ModelInfo { source: loaded.label.clone(), sha256: loaded.sha256.clone() });
    let invariants: Vec<&str> = m.invariants.iter().map(|(n, _)| n.as_str()).collect();
    report.simulation = Some(json!({
        "variables": m.variables,
        "constants": m.constants.iter().map(|c| (c.name.clone(), format_rational(&c.value))).collect::<std::collections::BTreeMap<_, _>>(),
        "invariants": invariants,
        "nonstandard_shape": m.nonstandard_shape(),
        "warnings": m.warnings,
        "printed": print_model(m),
    }));
    let mut text = print_model(m);
    text.push_str(&format!("\nshape: {}\n", if m.nonstandard_shape() { "nonstandard" } else { "standard" }));
    for w in &m.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    emit(&mut report, &args.output, Status::Ok, text)
}

/// Constants (with overrides) then every declared variable, zero unless set.
fn base_state(model: &Model, overrides: &[String]) -> Result<State<Real>, CliError> {
    let vars = Arc::new(VarTable::new(model.state_names()));
    let mut state = State::zeros(vars);
    for (name, value) in model.constant_values() {
        state = state.with(&name, Real::Exact(value)).expect("constant is a slot");
    }
    for (name, value) in parse_constants(overrides)? {
        if !model.is_constant(&name) {
            return Err(CliError::usage(format!("unknown constant `{name}`")));
        }
        state = state.with(&name, Real::Exact(value)).expect("constant is a slot");
    }
    Ok(state)
}

fn write_trace(path: &Path, model: &Model, trace: &Trace<Real>) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::usage(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut head = vec!["step".to_string(), "construct".to_string(), "t".to_string()];
    head.extend(model.variables.iter().cloned());
    w.write_record(&head).map_err(io)?;
    let slots: Vec<usize> = model.variables.iter().map(|v| trace.vars.slot(v).expect("declared variable")).collect();
    for e in &trace.entries {
        let mut row = vec![e.step.to_string(), e.construct.to_string(), e.time.to_string()];
        row.extend(slots.iter().map(|s| e.values[*s].to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn state_json(model: &Model, s: &State<Real>) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> =
        model.variables.iter().filter_map(|v| s.get(v).map(|x| (v.clone(), json!(x.to_string())))).collect();
    serde_json::Value::Object(map)
}

fn outcome_json(model: &Model, o: &Outcome<Real>) -> serde_json::Value {
    match o {
        Outcome::Final(s) => json!({ "aborted": false, "state": state_json(model, s) }),
        Outcome::Aborted { test, state } => json!({ "aborted": true, "failed_test": print_fol(test), "state": state_json(model, state) }),
    }
}

fn outcome_text(model: &Model, o: &Outcome<Real>) -> String {
    let values = |s: &State<Real>| model.variables.iter().filter_map(|v| s.get(v).map(|x| format!("{v}={x}"))).collect::<Vec<_>>().join(" ");
    match o {
        Outcome::Final(s) => format!("final state: {}\n", values(s)),
        Outcome::Aborted { test, state } => format!("aborted at test {}\nstate: {}\n", print_fol(test), values(state)),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<Status, CliError> {
    let loaded = load_model(&args.model)?;
    let model = &loaded.model;
    let mut report = RunReport::new("simulate");
    report.model = Some(ModelInfo { source: loaded.label.clone(), sha256: loaded.sha256.clone() });
    let base = base_state(model, &args.constants)?;
    if let Some(n) = args.random {
        let sampler = Sampler::new(model, base).map_err(|e| CliError::usage(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let (mut aborted, mut completed, mut violations) = (0usize, 0usize, Vec::new());
        for i in 0..n {
            let initial = sampler
                .initial(&mut rng)
                .map_err(|e| CliError::usage(e.to_string()))?
                .ok_or_else(|| CliError::usage("no state in the domains satisfies init"))?;
            let ex = sampler.execute(&mut rng, initial, args.max_iterations).map_err(|e| CliError::usage(e.to_string()))?;
            if i == 0 {
                if let Some(path) = &args.trace {
                    write_trace(path, model, &ex.trace)?;
                }
            }
            match &ex.outcome {
                Outcome::Aborted { .. } => aborted += 1,
                Outcome::Final(s) => {
                    completed += 1;
                    if !eval_fol(s, &model.guarantee).map_err(|e| CliError::usage(e.to_string()))? {
                        violations.push(json!({
                            "execution": i,
                            "initial": state_json(model, &ex.initial),
                            "script": ex.script.lines(),
                            "final": state_json(model, s),
                        }));
                    }
                }
            }
        }
        let status = if violations.is_empty() { Status::Ok } else { Status::Finding };
        let text = format!(
            "{n} executions (seed {}): {completed} completed, {aborted} aborted, {} guarantee violations among completed\n",
            args.seed,
            violations.len()
        );
        report.simulation = Some(json!({
            "mode": "random", "executions": n, "seed": args.seed, "completed": completed, "aborted": aborted, "guarantee_violations": violations,
        }));
        return emit(&mut report, &args.output, status, text);
    }
    let path = args.script.as_ref().ok_or_else(|| CliError::usage("simulate needs --script PATH or --random N"))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let file = ScriptFile::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut state = base;
    for (name, value) in &file.state {
        state = state.with(name, value.clone()).map_err(|_| CliError::usage(format!("`{name}` is not a model variable")))?;
    }
    let (outcome, trace) = run_with(&state, &model.system(), &file.script, &OdeOptions::default()).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if let Some(out) = &args.trace {
        write_trace(out, model, &trace)?;
    }
    let exact = trace.entries.iter().all(|e| e.values.iter().all(|v| v.as_rational().is_some()));
    report.simulation = Some(json!({
        "mode": "script",
        "script": file.script.lines(),
        "outcome": outcome_json(model, &outcome),
        "exact": exact,
        "steps": trace.entries.len(),
    }));
    let text = format!("{}exact: {exact}\n", outcome_text(model, &outcome));
    emit(&mut report, &args.output, Status::Ok, text)
}

pub fn check(args: &CheckArgs) -> Result<Status, CliError> {
    let loaded = load_model(&args.model)?;
    let selector: Selector = args.obligation.parse().map_err(CliError::usage)?;
    let settings = args.search.settings()?;
    let cfg = args.search.config()?;
    let g = Generator::new(&loaded.model, settings).map_err(|e| CliError::usage(e.to_string()))?;
    let zeta = g.invariant(&args.invariant).map_err(|e| CliError::usage(e.to_string()))?;
    let instantiation = match &args.psi {
        Some(item) => {
            let (var, term) = item.split_once('=').ok_or_else(|| CliError::usage(format!("expected VAR=TERM, found `{item}`")))?;
            let t = parse_term(term).map_err(|e| CliError::usage(format!("--psi: {e}")))?;
            Some((var.trim().to_string(), t))
        }
        None => None,
    };
    let obligations = g
        .select(&args.invariant, zeta, selector, instantiation.as_ref().map(|(v, t)| (v.as_str(), t)))
        .map_err(|e: ObligationError| CliError::usage(e.to_string()))?;
    let mut report = RunReport::new("check");
    report.model = Some(ModelInfo { source: loaded.label.clone(), sha256: loaded.sha256.clone() });
    let mut echo = ConfigEcho::new(cfg.seed, cfg.budget);
    let mut status = Status::Ok;
    for o in &obligations {
        echo.absorb(o);
        let v = check_obligation(o, &cfg).map_err(check_error)?;
        if let Some(cx) = &v.certificate {
            if !certify(cx, o) {
                log::error!("certificate for {} does not re-validate", o.name);
                status = Status::Certification;
            }
        }
        if v.is_finding() && status == Status::Ok {
            status = Status::Finding;
        }
        report.verdicts.push(v);
    }
    report.config = Some(echo);
    let text = report::verdict_table(&report.verdicts);
    emit(&mut report, &args.search.output, status, text)
}

pub fn table2(args: &SearchArgs) -> Result<Status, CliError> {
    let settings = args.settings()?;
    let cfg = args.config()?;
    let rows = models::table2_suite();
    let t = run_table2(&rows, |id| models::builtin(id).ok(), &settings, &cfg, workers()).map_err(check_error)?;
    let mut report = RunReport::new("table2");
    let sources: Vec<&[u8]> = [models::M2, models::M3, models::M4, models::INVARIANTS, models::TABLE2].iter().map(|s| s.as_bytes()).collect();
    report.model = Some(ModelInfo { source: "bundled m2, m3, m4".into(), sha256: sha256_hex(&sources) });
    let mut echo = ConfigEcho::new(cfg.seed, cfg.budget);
    for id in models::IDS {
        let m = models::builtin(id).map_err(|e| CliError::usage(e.to_string()))?;
        let g = Generator::new(&m, settings.clone()).map_err(|e| CliError::usage(e.to_string()))?;
        for row in rows.iter().filter(|r| r.model == id) {
            let zeta = g.invariant(&row.invariant).map_err(|e| CliError::usage(e.to_string()))?;
            for o in g.loop_obligations(&row.invariant, zeta).map_err(|e| CliError::usage(e.to_string()))? {
                echo.absorb(&o);
            }
            if m.relation.is_some() {
                echo.absorb(&g.rho_obligation(&row.invariant, zeta).map_err(|e| CliError::usage(e.to_string()))?);
            }
        }
    }
    report.config = Some(echo);
    for row in &t.rows {
        for item in &row.results {
            for v in item.verdicts.iter().chain(item.derived.iter()) {
                if v.certificate.as_ref().is_some_and(|cx| !cx.exact) {
                    log::warn!("{} is certified numerically only", v.obligation);
                }
            }
        }
    }
    let status = if t.all_match { Status::Ok } else { Status::Finding };
    let text = report::table2_text(&t);
    report.table2 = Some(t);
    emit(&mut report, &args.output, status, text)
}
