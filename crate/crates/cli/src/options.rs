use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hpcheck::checker::SearchConfig;
use hpcheck::model::Model;
use hpcheck::models;
use hpcheck::obligations::{ObligationSettings, SearchRange};
use hpcheck::parser::parse_model_with_fragments;
use hpcheck::real::parse_rational;
use num_rational::BigRational;
use sha2::{Digest, Sha256};

use crate::Status;

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError { status: Status::Usage, message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Model file, or one of the bundled ids m2, m3, m4.
    pub model: String,
    /// Extra fragment files (invariants, relation, domains). Defaults to
    /// `invariants.hpfrag` next to the model when present.
    #[arg(long = "fragment", value_name = "PATH")]
    pub fragments: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Also write the JSON report to this file.
    #[arg(long = "json-out", value_name = "PATH")]
    pub json_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum candidate evaluations per obligation.
    #[arg(long, default_value_t = 200_000)]
    pub budget: u64,
    /// Search range override, e.g. `--box x=-1:5`.
    #[arg(long = "box", value_name = "VAR=LO:HI")]
    pub boxes: Vec<String>,
    /// Constant override, e.g. `--const T=1/2`.
    #[arg(long = "const", value_name = "NAME=VALUE")]
    pub constants: Vec<String>,
    /// Quantify over constants instead of fixing them.
    #[arg(long)]
    pub search_constants: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ParseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Choice script to replay.
    #[arg(long, conflicts_with = "random")]
    pub script: Option<PathBuf>,
    /// Number of random executions.
    #[arg(long, value_name = "N")]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loop iterations of a random execution are drawn from 1..=N.
    #[arg(long, default_value_t = 3)]
    pub max_iterations: usize,
    /// Write the trace as CSV. Random mode writes the first execution.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    #[arg(long = "const", value_name = "NAME=VALUE")]
    pub constants: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub invariant: String,
    /// loop, rho, gamma, exploit, chi, not-chi, psi, friendly or all.
    #[arg(long, default_value = "all")]
    pub obligation: String,
    /// Instantiation for psi, e.g. `--psi a=-anmin`.
    #[arg(long, value_name = "VAR=TERM")]
    pub psi: Option<String>,
    #[command(flatten)]
    pub search: SearchArgs,
}

pub struct LoadedModel {
    pub model: Model,
    pub label: String,
    pub sha256: String,
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn load_model(args: &ModelArgs) -> Result<LoadedModel, CliError> {
    let path = Path::new(&args.model);
    if !path.exists() && args.fragments.is_empty() {
        if let Some(text) = models::source(&args.model) {
            let model = models::builtin(&args.model).map_err(|e| CliError::usage(e.to_string()))?;
            return Ok(LoadedModel { model, label: args.model.clone(), sha256: sha256_hex(&[text.as_bytes(), models::INVARIANTS.as_bytes()]) });
        }
    }
    let text = read(path)?;
    let mut fragment_paths = args.fragments.clone();
    if fragment_paths.is_empty() {
        let sibling = path.with_file_name("invariants.hpfrag");
        if sibling.exists() {
            fragment_paths.push(sibling);
        }
    }
    let fragments = fragment_paths.iter().map(|p| read(p)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&str> = fragments.iter().map(String::as_str).collect();
    let model = parse_model_with_fragments(&text, &refs)
        .map_err(|e| CliError::usage(format!("{}:{}:{}: {}", path.display(), e.span.line, e.span.col, e.message)))?;
    let mut parts: Vec<&[u8]> = vec![text.as_bytes()];
    parts.extend(fragments.iter().map(|f| f.as_bytes()));
    Ok(LoadedModel { model, label: path.display().to_string(), sha256: sha256_hex(&parts) })
}

fn rational(text: &str, what: &str) -> Result<BigRational, CliError> {
    parse_rational(text.trim()).ok_or_else(|| CliError::usage(format!("bad number `{text}` in {what}")))
}

pub fn parse_constants(items: &[String]) -> Result<BTreeMap<String, BigRational>, CliError> {
    let mut out = BTreeMap::new();
    for item in items {
        let (name, value) = item.split_once('=').ok_or_else(|| CliError::usage(format!("expected NAME=VALUE, found `{item}`")))?;
        out.insert(name.trim().to_string(), rational(value, "--const")?);
    }
    Ok(out)
}

pub fn parse_boxes(items: &[String]) -> Result<BTreeMap<String, SearchRange>, CliError> {
    let mut out = BTreeMap::new();
    for item in items {
        let bad = || CliError::usage(format!("expected VAR=LO:HI, found `{item}`"));
        let (name, range) = item.split_once('=').ok_or_else(bad)?;
        let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
        let (lo, hi) = (rational(lo, "--box")?, rational(hi, "--box")?);
        if lo > hi {
            return Err(CliError::usage(format!("empty box `{item}`")));
        }
        out.insert(name.trim().to_string(), SearchRange::Interval { lo, hi });
    }
    Ok(out)
}

impl SearchArgs {
    pub fn settings(&self) -> Result<ObligationSettings, CliError> {
        Ok(ObligationSettings {
            constants: parse_constants(&self.constants)?,
            boxes: parse_boxes(&self.boxes)?,
            search_constants: self.search_constants,
        })
    }

    pub fn config(&self) -> Result<SearchConfig, CliError> {
        let cfg = SearchConfig { budget: self.budget, seed: self.seed, ..SearchConfig::default() };
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Worker count: `HPCHECK_THREADS` when set, else the available parallelism.
pub fn workers() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("HPCHECK_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n >= 1 => n,
        _ => available,
    }
}
