//! Candidate stream, batched parallel evaluation and compass refinement.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::certify::certify_detailed;
use super::explore::{Evidence, Explorer, SearchScalar};
use super::form::{matrix, DForm, Dim, FormCompiler};
use super::{CheckError, Counterexample, Outcome, SearchConfig, Stats, Verdict};
use crate::obligations::{Obligation, ObligationKind};
use crate::real::Real;
use crate::semantics::Prog;

pub(crate) const BATCH: usize = 1024;

pub(crate) struct Prepared<'a> {
    pub ob: &'a Obligation,
    pub cfg: &'a SearchConfig,
    pub form: DForm,
    pub want: bool,
    pub dims: Vec<Dim>,
    pub slots: Vec<usize>,
    pub inner: Vec<Option<Dim>>,
    pub names: Vec<String>,
    pub base_f64: Vec<f64>,
    pub base_real: Vec<Real>,
    /// Evaluation does not depend on the tape: a finite box is covered by
    /// enumerating it once.
    pub tape_free: bool,
}

impl<'a> Prepared<'a> {
    pub fn new(ob: &'a Obligation, cfg: &'a SearchConfig) -> Result<Prepared<'a>, CheckError> {
        let matrix = matrix(ob)?;
        let fc = FormCompiler::new(ob, &cfg.ode);
        let form = fc.form(&matrix)?;
        let mut inner = fc.inner_dims()?;
        let mut randoms = Vec::new();
        random_slots(&form, &mut randoms);
        for s in &randoms {
            if inner[*s].is_none() {
                inner[*s] = Some(Dim::new(&crate::obligations::SearchRange::interval(-crate::parser::DEFAULT_BOUND, crate::parser::DEFAULT_BOUND)));
            }
        }
        let vars = &ob.variables;
        let mut base_real = vec![Real::from_int(0); vars.len()];
        for (name, value) in &ob.fixed_constants {
            if let Some(s) = vars.slot(name) {
                base_real[s] = Real::Exact(value.clone());
            }
        }
        let base_f64 = base_real.iter().map(crate::real::Scalar::to_f64).collect();
        let mut dims = Vec::new();
        let mut slots = Vec::new();
        for (name, range) in &ob.search_box {
            dims.push(Dim::new(range));
            slots.push(vars.slot(name).ok_or_else(|| CheckError::Uncoverable(name.clone()))?);
        }
        let tape_free = (cfg.duration_samples <= 2 || !has_ode(&form))
            && randoms.iter().all(|s| inner[*s].as_ref().is_some_and(Dim::is_finite))
            && quantifiers_finite(&form, &inner);
        Ok(Prepared {
            ob,
            cfg,
            form,
            want: ob.kind == ObligationKind::FindWitness,
            dims,
            slots,
            inner,
            names: vars.names().to_vec(),
            base_f64,
            base_real,
            tape_free,
        })
    }

    fn state<S: SearchScalar>(&self, base: &[S], coords: &[i64]) -> Vec<S> {
        let mut vals = base.to_vec();
        for ((dim, slot), c) in self.dims.iter().zip(&self.slots).zip(coords) {
            vals[*slot] = S::at(dim, *c);
        }
        vals
    }

    /// Search value of a candidate and whether part of it was undecidable.
    pub fn evaluate(&self, coords: &[i64], tape: u64) -> (f64, bool) {
        let mut vals = self.state(&self.base_f64, coords);
        let mut ex = Explorer::new(self.cfg, &self.inner, &self.names, self.cfg.seed, tape, false);
        match ex.goal(&self.form, self.want, &mut vals) {
            Ok(r) if r.v.is_nan() => (f64::NEG_INFINITY, true),
            Ok(r) => (r.v, ex.unknown),
            Err(_) => (f64::NEG_INFINITY, true),
        }
    }

    /// Exact re-exploration of a candidate, recording evidence.
    pub fn record(&self, coords: &[i64], tape: u64) -> Option<(f64, Evidence)> {
        let mut vals = self.state(&self.base_real, coords);
        let mut ex = Explorer::new(self.cfg, &self.inner, &self.names, self.cfg.seed, tape, true);
        match ex.goal(&self.form, self.want, &mut vals) {
            Ok(r) if r.v > 0.0 => r.ev.map(|e| (r.v, e)),
            _ => None,
        }
    }

    pub fn assignment(&self, coords: &[i64]) -> Vec<(String, Real)> {
        let mut out: Vec<(String, Real)> = self.ob.search_box.iter().zip(&self.dims).zip(coords).map(|(((n, _), d), c)| (n.clone(), d.real_at(*c))).collect();
        out.extend(self.ob.fixed_constants.iter().map(|(n, v)| (n.clone(), Real::Exact(v.clone()))));
        out
    }

    /// Certified counterexample for a candidate with positive search value.
    fn certified(&self, coords: &[i64], tape: u64) -> Option<Counterexample> {
        let Some((margin, evidence)) = self.record(coords, tape) else {
            log::debug!("{}: candidate {coords:?} (tape {tape}) not confirmed in exact arithmetic", self.ob.name);
            return None;
        };
        let mut cx = Counterexample {
            assignment: self.assignment(coords),
            scripts: Vec::new(),
            margin,
            exact: false,
            evidence,
            innermost: None,
            trace: None,
            ode: self.cfg.ode.clone(),
        };
        match certify_detailed(&cx, self.ob) {
            Ok(cert) => {
                cx.scripts = cert.scripts;
                cx.exact = cert.exact;
                cx.innermost = cert.innermost;
                cx.trace = cert.trace;
                Some(cx)
            }
            Err(why) => {
                log::debug!("{}: certification of {coords:?} failed: {why}", self.ob.name);
                None
            }
        }
    }
}

fn random_slots(f: &DForm, out: &mut Vec<usize>) {
    fn prog(p: &Prog, out: &mut Vec<usize>) {
        match p {
            Prog::Random { slot, .. } => out.push(*slot),
            Prog::Choice(a, b) => {
                prog(a, out);
                prog(b, out);
            }
            Prog::Seq(items) => items.iter().for_each(|p| prog(p, out)),
            Prog::Loop(a) => prog(a, out),
            Prog::Assign { .. } | Prog::Test { .. } | Prog::Ode(_) => {}
        }
    }
    match f {
        DForm::Fol(_) => {}
        DForm::Not(a) => random_slots(a, out),
        DForm::And(a, b) | DForm::Or(a, b) | DForm::Implies(a, b) => {
            random_slots(a, out);
            random_slots(b, out);
        }
        DForm::Box(m) | DForm::Diamond(m) => {
            prog(&m.prog, out);
            random_slots(&m.post, out);
        }
        DForm::Quant { body, .. } => random_slots(body, out),
    }
}

fn has_ode(f: &DForm) -> bool {
    fn prog(p: &Prog) -> bool {
        match p {
            Prog::Ode(_) => true,
            Prog::Choice(a, b) => prog(a) || prog(b),
            Prog::Seq(items) => items.iter().any(prog),
            Prog::Loop(a) => prog(a),
            Prog::Assign { .. } | Prog::Test { .. } | Prog::Random { .. } => false,
        }
    }
    match f {
        DForm::Fol(_) => false,
        DForm::Not(a) | DForm::Quant { body: a, .. } => has_ode(a),
        DForm::And(a, b) | DForm::Or(a, b) | DForm::Implies(a, b) => has_ode(a) || has_ode(b),
        DForm::Box(m) | DForm::Diamond(m) => prog(&m.prog) || has_ode(&m.post),
    }
}

fn quantifiers_finite(f: &DForm, inner: &[Option<Dim>]) -> bool {
    match f {
        DForm::Fol(_) => true,
        DForm::Not(a) => quantifiers_finite(a, inner),
        DForm::And(a, b) | DForm::Or(a, b) | DForm::Implies(a, b) => quantifiers_finite(a, inner) && quantifiers_finite(b, inner),
        DForm::Box(m) | DForm::Diamond(m) => quantifiers_finite(&m.post, inner),
        DForm::Quant { slot, body, .. } => inner[*slot].as_ref().is_some_and(Dim::is_finite) && quantifiers_finite(body, inner),
    }
}

/// Grid points level by level, then seeded uniform samples. The tape index
/// of an event is its position in the stream.
pub(crate) struct Stream<'a> {
    dims: &'a [Dim],
    seed: u64,
    grid_levels: u32,
    grid_cap: u64,
    level: u32,
    points: Vec<Vec<(i64, bool)>>,
    counter: Vec<usize>,
    in_grid: bool,
    /// Finite box and tape-free evaluation: stop after level 0.
    exhaustive: bool,
    next_tape: u64,
}

impl<'a> Stream<'a> {
    pub fn new(dims: &'a [Dim], cfg: &SearchConfig, tape_free: bool) -> Stream<'a> {
        let exhaustive = tape_free && dims.iter().all(Dim::is_finite);
        let mut s = Stream {
            dims,
            seed: cfg.seed,
            grid_levels: cfg.grid_levels,
            grid_cap: cfg.grid_cap,
            level: 0,
            points: Vec::new(),
            counter: Vec::new(),
            in_grid: true,
            exhaustive,
            next_tape: 0,
        };
        s.enter_level(0);
        s
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    fn enter_level(&mut self, level: u32) {
        let has_interval = self.dims.iter().any(|d| !d.is_finite());
        if level > self.grid_levels || (level > 0 && !has_interval) {
            self.in_grid = false;
            return;
        }
        self.level = level;
        self.points = self
            .dims
            .iter()
            .map(|d| match d {
                Dim::Finite { values, .. } => (0..values.len() as i64).map(|c| (c, level == 0)).collect(),
                Dim::Interval { lo, hi } => {
                    let n = 1i128 << level;
                    let mut pts: Vec<(i64, bool)> = Vec::new();
                    for j in 0..=n {
                        let c = (*lo as i128 + (j * (*hi - *lo) as i128 + n / 2) / n) as i64;
                        if pts.last().is_none_or(|p| p.0 != c) {
                            pts.push((c, level == 0 || j % 2 == 1));
                        }
                    }
                    pts
                }
            })
            .collect();
        let size = self.points.iter().fold(1u64, |acc, p| acc.saturating_mul(p.len() as u64));
        if size > self.grid_cap && !self.exhaustive {
            self.in_grid = false;
            return;
        }
        self.counter = vec![0; self.dims.len()];
    }

    fn advance(&mut self) -> bool {
        for i in (0..self.counter.len()).rev() {
            self.counter[i] += 1;
            if self.counter[i] < self.points[i].len() {
                return true;
            }
            self.counter[i] = 0;
        }
        false
    }

    fn grid_next(&mut self) -> Option<Vec<i64>> {
        while self.in_grid {
            let current: Vec<(i64, bool)> = self.counter.iter().zip(&self.points).map(|(c, p)| p[*c]).collect();
            let fresh = self.level == 0 || current.iter().any(|p| p.1);
            if !self.advance() {
                if self.exhaustive {
                    self.in_grid = false;
                } else {
                    self.enter_level(self.level + 1);
                }
            }
            if fresh {
                return Some(current.into_iter().map(|p| p.0).collect());
            }
        }
        None
    }

    fn sample(&self, tape: u64) -> Vec<i64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tape);
        self.dims
            .iter()
            .map(|d| match d {
                Dim::Interval { lo, hi } => rng.gen_range(*lo..=*hi),
                Dim::Finite { values, .. } => rng.gen_range(0..values.len() as i64),
            })
            .collect()
    }
}

impl Iterator for Stream<'_> {
    type Item = (Vec<i64>, u64);

    fn next(&mut self) -> Option<(Vec<i64>, u64)> {
        let coords = match self.grid_next() {
            Some(c) => c,
            None if self.exhaustive => return None,
            None => self.sample(self.next_tape),
        };
        let tape = self.next_tape;
        self.next_tape += 1;
        Some((coords, tape))
    }
}

struct Search<'p, 'a> {
    p: &'p Prepared<'a>,
    events: u64,
    unknown: u64,
    rejected: u64,
    best: f64,
}

/// A certified finding and the index of the event that produced it.
type Found = (Counterexample, u64);

impl Search<'_, '_> {
    /// Evaluate one refinement candidate; `Some` on a certified finding.
    fn probe(&mut self, coords: &[i64], tape: u64) -> (f64, Option<Found>) {
        let event = self.events;
        self.events += 1;
        let (v, u) = self.p.evaluate(coords, tape);
        self.unknown += u as u64;
        if v > self.best {
            self.best = v;
        }
        if v > 0.0 {
            match self.p.certified(coords, tape) {
                Some(cx) => return (v, Some((cx, event))),
                None => self.rejected += 1,
            }
        }
        (v, None)
    }

    fn refine(&mut self, start: Vec<i64>, start_v: f64, tape: u64) -> Option<Found> {
        let cfg = self.p.cfg;
        let dims = &self.p.dims;
        let mut cur = start;
        let mut cur_v = start_v;
        let mut steps: Vec<i64> = dims
            .iter()
            .map(|d| match d {
                Dim::Interval { lo, hi } => ((hi - lo) / 8).max(1),
                Dim::Finite { .. } => 1,
            })
            .collect();
        for _ in 0..cfg.local_refine_iters {
            let mut improved = false;
            for d in 0..dims.len() {
                for sign in [1i64, -1] {
                    let mut cand = cur.clone();
                    cand[d] = dims[d].clamp(cur[d] + sign * steps[d]);
                    if cand == cur {
                        continue;
                    }
                    if self.events >= cfg.budget {
                        return None;
                    }
                    let (v, found) = self.probe(&cand, tape);
                    if found.is_some() {
                        return found;
                    }
                    if v > cur_v {
                        cur = cand;
                        cur_v = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                if steps.iter().zip(dims).all(|(s, d)| *s == 1 || d.is_finite()) {
                    return None;
                }
                for (s, d) in steps.iter_mut().zip(dims) {
                    if !d.is_finite() {
                        *s = (*s / 2).max(1);
                    }
                }
            }
        }
        None
    }
}

pub(crate) fn run(ob: &Obligation, cfg: &SearchConfig) -> Result<Verdict, CheckError> {
    cfg.validate()?;
    let started = Instant::now();
    let p = Prepared::new(ob, cfg)?;
    let mut stream = Stream::new(&p.dims, cfg, p.tape_free);
    let mut s = Search { p: &p, events: 0, unknown: 0, rejected: 0, best: f64::NEG_INFINITY };
    let mut covered = false;
    let mut found = None;
    'outer: while s.events < cfg.budget {
        let n = (cfg.budget - s.events).min(BATCH as u64) as usize;
        let batch: Vec<(Vec<i64>, u64)> = stream.by_ref().take(n).collect();
        if batch.is_empty() {
            covered = true;
            break;
        }
        let values: Vec<(f64, bool)> = batch.par_iter().map(|(c, t)| p.evaluate(c, *t)).collect();
        let mut near: Option<(f64, usize)> = None;
        for (i, (v, u)) in values.iter().enumerate() {
            s.unknown += *u as u64;
            if *v > s.best {
                s.best = *v;
            }
            if *v > 0.0 {
                let (c, t) = &batch[i];
                match p.certified(c, *t) {
                    Some(cx) => {
                        found = Some((cx, s.events + i as u64));
                        break 'outer;
                    }
                    None => s.rejected += 1,
                }
            } else if v.is_finite() && near.is_none_or(|(b, _)| *v > b) {
                near = Some((*v, i));
            }
        }
        s.events += batch.len() as u64;
        if batch.len() < n {
            covered = stream.is_exhaustive();
            break;
        }
        if batch.len() == BATCH && cfg.local_refine_iters > 0 {
            if let Some((v, i)) = near {
                let (c, t) = batch[i].clone();
                if let Some(f) = s.refine(c, v, t) {
                    found = Some(f);
                    break;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let (outcome, certificate, evaluations) = match found {
        Some((cx, event)) => {
            let o = if p.want { Outcome::WitnessFound } else { Outcome::Falsified };
            (o, Some(cx), event + 1)
        }
        None => {
            let o = if p.want { Outcome::NoWitnessFound } else { Outcome::NotFalsified };
            (o, None, s.events)
        }
    };
    Ok(Verdict {
        obligation: ob.name.clone(),
        formula: ob.text(),
        kind: ob.kind,
        outcome,
        certificate,
        seed: cfg.seed,
        stats: Stats {
            evaluations,
            undecided: s.unknown,
            rejected: s.rejected,
            exhaustive: covered && stream.is_exhaustive(),
            best_margin: s.best,
            wall_ms: elapsed.as_millis() as u64,
        },
    })
}
