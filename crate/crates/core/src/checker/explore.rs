//! Goal-directed evaluation of compiled matrices.
//!
//! `goal(f, want)` is positive when the explorer found that `f` has truth
//! value `want`, and otherwise a non-positive distance used to steer the
//! search. Modalities whose polarity asks for one execution (box refuted,
//! diamond established) are explored over a finite sample of resolutions;
//! the opposite polarity must enumerate every execution and gives up when
//! that is impossible.

use std::mem;

use super::form::{equation_for, DForm, Dim, Modal, SNAP};
use super::SearchConfig;
use crate::real::{Real, Scalar};
use crate::semantics::{ChoiceScript, Cond, Decision, Prog, SemanticsError, Side};

/// Record of why a goal was met, mirroring the formula structure.
#[derive(Clone, Debug, PartialEq)]
pub enum Evidence {
    /// A first-order leaf with the wanted truth value.
    Atom,
    Both(Box<Evidence>, Box<Evidence>),
    Left(Box<Evidence>),
    Right(Box<Evidence>),
    /// One execution reaching the postcondition.
    Modal { script: ChoiceScript, post: Box<Evidence> },
    /// Every execution, aborted ones without post evidence.
    Decided { paths: Vec<(ChoiceScript, Option<Evidence>)> },
    Quant { value: Real, body: Box<Evidence> },
    Each { values: Vec<(Real, Evidence)> },
}

pub(crate) trait SearchScalar: Scalar {
    const STRICT: bool;
    fn at(dim: &Dim, c: i64) -> Self;
    fn snapped(k: i64) -> Self;
    fn real(&self) -> Real;
}

impl SearchScalar for f64 {
    const STRICT: bool = false;
    fn at(dim: &Dim, c: i64) -> f64 {
        dim.f64_at(c)
    }
    fn snapped(k: i64) -> f64 {
        k as f64 / SNAP as f64
    }
    fn real(&self) -> Real {
        Real::Approx(*self)
    }
}

impl SearchScalar for Real {
    const STRICT: bool = true;
    fn at(dim: &Dim, c: i64) -> Real {
        dim.real_at(c)
    }
    fn snapped(k: i64) -> Real {
        Real::Exact(super::form::snapped(k))
    }
    fn real(&self) -> Real {
        self.clone()
    }
}

pub(crate) struct Val {
    pub v: f64,
    pub ev: Option<Evidence>,
}

impl Val {
    fn miss(v: f64) -> Val {
        Val { v, ev: None }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` determined by the key.
pub(crate) fn unit(key: &[u64]) -> f64 {
    let h = key.iter().fold(0x5eed_u64, |h, k| splitmix(h ^ splitmix(*k)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

const DURATION_TAG: u64 = u64::MAX;

enum Cont<'p> {
    Done,
    Items(&'p [Prog], &'p Cont<'p>),
    Repeat(&'p Prog, usize, &'p Cont<'p>),
}

struct Frame<'m> {
    modal: &'m Modal,
    want: bool,
    decide: bool,
    acc: f64,
    found: Option<Evidence>,
    paths: Vec<(ChoiceScript, Option<Evidence>)>,
    script: Vec<Decision>,
    stop: bool,
}

pub(crate) struct Explorer<'a> {
    pub cfg: &'a SearchConfig,
    /// Ranges of randomly assigned and inner-quantified slots.
    pub inner: &'a [Option<Dim>],
    pub names: &'a [String],
    pub seed: u64,
    pub tape: u64,
    pub record: bool,
    /// Set when some part could not be decided.
    pub unknown: bool,
    depth: u64,
}

fn hit(m: f64) -> f64 {
    m.max(f64::MIN_POSITIVE)
}

fn miss(m: f64) -> f64 {
    m.min(-f64::MIN_POSITIVE)
}

impl<'a> Explorer<'a> {
    pub fn new(cfg: &'a SearchConfig, inner: &'a [Option<Dim>], names: &'a [String], seed: u64, tape: u64, record: bool) -> Self {
        Explorer { cfg, inner, names, seed, tape, record, unknown: false, depth: 0 }
    }

    fn sample(&self, dim: &Dim, tag: u64, k: u64) -> i64 {
        dim.from_unit(unit(&[self.seed, self.tape, tag, self.depth, k]))
    }

    pub fn goal<S: SearchScalar>(&mut self, f: &DForm, want: bool, vals: &mut Vec<S>) -> Result<Val, SemanticsError> {
        Ok(match f {
            DForm::Fol(c) => self.atom(c, want, vals)?,
            DForm::Not(a) => self.goal(a, !want, vals)?,
            DForm::And(x, y) if want => self.both(x, true, y, true, vals)?,
            DForm::And(x, y) => self.either(x, false, y, false, vals)?,
            DForm::Or(x, y) if want => self.either(x, true, y, true, vals)?,
            DForm::Or(x, y) => self.both(x, false, y, false, vals)?,
            DForm::Implies(x, y) if want => self.either(x, false, y, true, vals)?,
            DForm::Implies(x, y) => self.both(x, true, y, false, vals)?,
            DForm::Box(m) => self.modal(m, want, want, vals)?,
            DForm::Diamond(m) => self.modal(m, want, !want, vals)?,
            DForm::Quant { slot, exists, body } => self.quant(*slot, *exists == want, body, want, vals)?,
        })
    }

    fn atom<S: SearchScalar>(&mut self, c: &Cond, want: bool, vals: &[S]) -> Result<Val, SemanticsError> {
        let j = c.judge_with(vals, S::STRICT)?;
        let Some(truth) = j.truth else {
            self.unknown = true;
            return Ok(Val::miss(f64::NEG_INFINITY));
        };
        let m = if want { j.margin } else { -j.margin };
        if truth == want {
            Ok(Val { v: hit(m), ev: self.record.then_some(Evidence::Atom) })
        } else {
            Ok(Val::miss(miss(m)))
        }
    }

    fn both<S: SearchScalar>(&mut self, x: &DForm, wx: bool, y: &DForm, wy: bool, vals: &mut Vec<S>) -> Result<Val, SemanticsError> {
        let a = self.goal(x, wx, vals)?;
        if a.v <= 0.0 {
            return Ok(a);
        }
        let b = self.goal(y, wy, vals)?;
        if b.v <= 0.0 {
            return Ok(b);
        }
        let ev = match (a.ev, b.ev) {
            (Some(p), Some(q)) => Some(Evidence::Both(Box::new(p), Box::new(q))),
            _ => None,
        };
        Ok(Val { v: a.v.min(b.v), ev })
    }

    fn either<S: SearchScalar>(&mut self, x: &DForm, wx: bool, y: &DForm, wy: bool, vals: &mut Vec<S>) -> Result<Val, SemanticsError> {
        let a = self.goal(x, wx, vals)?;
        if a.v > 0.0 {
            return Ok(Val { v: a.v, ev: a.ev.map(|e| Evidence::Left(Box::new(e))) });
        }
        let b = self.goal(y, wy, vals)?;
        if b.v > 0.0 {
            return Ok(Val { v: b.v, ev: b.ev.map(|e| Evidence::Right(Box::new(e))) });
        }
        Ok(Val::miss(a.v.max(b.v)))
    }

    fn quant<S: SearchScalar>(&mut self, slot: usize, some: bool, body: &DForm, want: bool, vals: &mut Vec<S>) -> Result<Val, SemanticsError> {
        let dim = self.inner[slot].clone().expect("quantified slot has a range");
        let coords: Vec<i64> = match &dim {
            Dim::Finite { values, .. } => (0..values.len() as i64).collect(),
            Dim::Interval { lo, hi } if some => {
                let mut c = vec![*lo, *hi];
                c.extend((0..self.cfg.random_samples as u64).map(|k| self.sample(&dim, slot as u64, k)));
                c
            }
            Dim::Interval { .. } => {
                self.unknown = true;
                return Ok(Val::miss(f64::NEG_INFINITY));
            }
        };
        let old = vals[slot].clone();
        let mut acc = if some { f64::NEG_INFINITY } else { f64::INFINITY };
        let mut each = Vec::new();
        let mut result = None;
        self.depth += 1;
        for c in coords {
            vals[slot] = S::at(&dim, c);
            let r = self.goal(body, want, vals)?;
            if some {
                acc = acc.max(r.v);
                if r.v > 0.0 {
                    result = Some(r.ev.map(|e| Evidence::Quant { value: dim.real_at(c), body: Box::new(e) }));
                    break;
                }
            } else {
                acc = acc.min(r.v);
                if r.v <= 0.0 {
                    break;
                }
                if let Some(e) = r.ev {
                    each.push((dim.real_at(c), e));
                }
            }
        }
        self.depth -= 1;
        vals[slot] = old;
        let ev = match result {
            Some(ev) => ev,
            None if !some && acc > 0.0 && self.record => Some(Evidence::Each { values: each }),
            None => None,
        };
        Ok(Val { v: acc, ev })
    }

    fn modal<S: SearchScalar>(&mut self, m: &Modal, want: bool, decide: bool, vals: &mut Vec<S>) -> Result<Val, SemanticsError> {
        let mut fr = Frame {
            modal: m,
            want,
            decide,
            acc: if decide { f64::INFINITY } else { f64::NEG_INFINITY },
            found: None,
            paths: Vec::new(),
            script: Vec::new(),
            stop: false,
        };
        self.step(&mut fr, &m.prog, &Cont::Done, vals)?;
        let ev = if !self.record || fr.acc <= 0.0 {
            None
        } else if decide {
            Some(Evidence::Decided { paths: fr.paths })
        } else {
            fr.found
        };
        Ok(Val { v: fr.acc, ev })
    }

    fn push(&self, fr: &mut Frame, d: impl FnOnce() -> Decision) {
        if self.record {
            fr.script.push(d());
        }
    }

    fn pop(&self, fr: &mut Frame) {
        if self.record {
            fr.script.pop();
        }
    }

    fn step<S: SearchScalar>(&mut self, fr: &mut Frame, p: &Prog, k: &Cont, vals: &mut Vec<S>) -> Result<(), SemanticsError> {
        match p {
            Prog::Assign { slot, expr, .. } => {
                let new = expr.eval(vals)?;
                let old = mem::replace(&mut vals[*slot], new);
                self.resume(fr, k, vals)?;
                vals[*slot] = old;
            }
            Prog::Random { slot, .. } => {
                let Some(candidates) = self.random_values(fr, *slot, k, vals)? else {
                    self.abort(fr, None);
                    return Ok(());
                };
                let old = vals[*slot].clone();
                self.depth += 1;
                for value in candidates {
                    self.push(fr, || Decision::Random { var: Some(self.names[*slot].clone()), value: value.real() });
                    vals[*slot] = value;
                    self.resume(fr, k, vals)?;
                    self.pop(fr);
                    if fr.stop {
                        break;
                    }
                }
                self.depth -= 1;
                vals[*slot] = old;
            }
            Prog::Test { cond, .. } => {
                let j = cond.judge_with(vals, S::STRICT)?;
                match j.truth {
                    Some(true) => self.resume(fr, k, vals)?,
                    Some(false) => self.abort(fr, Some(j.margin)),
                    None => self.abort(fr, None),
                }
            }
            Prog::Ode(ode) => {
                if fr.decide {
                    self.abort(fr, None);
                    return Ok(());
                }
                let max: S = ode.max_duration(vals)?;
                let max_f = max.to_f64();
                let mut durations: Vec<(S, Decision)> = vec![(S::zero(), Decision::Duration(Real::from_int(0)))];
                if max_f > 0.0 {
                    durations.push((max, Decision::MaxDuration));
                    let mut seen = Vec::new();
                    for i in 0..self.cfg.duration_samples.saturating_sub(2) as u64 {
                        let u = unit(&[self.seed, self.tape, DURATION_TAG, self.depth, i]);
                        let kk = (u * max_f * SNAP as f64).floor() as i64;
                        if kk > 0 && (kk as f64) < max_f * SNAP as f64 && !seen.contains(&kk) {
                            seen.push(kk);
                            durations.push((S::snapped(kk), Decision::Duration(Real::Exact(super::form::snapped(kk)))));
                        }
                    }
                }
                self.depth += 1;
                for (d, decision) in durations {
                    match ode.evolve(vals, &d)? {
                        Some(next) => {
                            let saved = mem::replace(vals, next);
                            self.push(fr, || decision);
                            self.resume(fr, k, vals)?;
                            self.pop(fr);
                            *vals = saved;
                        }
                        None => {
                            let m = ode.domain.judge_with(vals, false)?.margin;
                            self.push(fr, || decision);
                            self.abort(fr, Some(if m < 0.0 { m } else { -f64::MIN_POSITIVE }));
                            self.pop(fr);
                        }
                    }
                    if fr.stop {
                        break;
                    }
                }
                self.depth -= 1;
            }
            Prog::Choice(a, b) => {
                for (side, branch) in [(Side::Left, a), (Side::Right, b)] {
                    self.push(fr, || Decision::Branch(side));
                    self.step(fr, branch, k, vals)?;
                    self.pop(fr);
                    if fr.stop {
                        break;
                    }
                }
            }
            Prog::Seq(items) => self.resume(fr, &Cont::Items(items, k), vals)?,
            Prog::Loop(body) => {
                if fr.decide {
                    self.abort(fr, None);
                    return Ok(());
                }
                for n in 0..=self.cfg.max_loop_unroll {
                    self.push(fr, || Decision::LoopCount(n));
                    self.resume(fr, &Cont::Repeat(body, n, k), vals)?;
                    self.pop(fr);
                    if fr.stop {
                        break;
                    }
                }
            }
        }
        Ok(())
    }

    fn resume<S: SearchScalar>(&mut self, fr: &mut Frame, k: &Cont, vals: &mut Vec<S>) -> Result<(), SemanticsError> {
        match k {
            Cont::Done => self.finish(fr, vals),
            Cont::Items([], rest) => self.resume(fr, rest, vals),
            Cont::Items([first, tail @ ..], rest) => self.step(fr, first, &Cont::Items(tail, rest), vals),
            Cont::Repeat(_, 0, rest) => self.resume(fr, rest, vals),
            Cont::Repeat(body, n, rest) => self.step(fr, body, &Cont::Repeat(body, n - 1, rest), vals),
        }
    }

    /// Values to try for a random assignment; `None` when an enumeration
    /// is required but impossible.
    fn random_values<S: SearchScalar>(&mut self, fr: &Frame, slot: usize, k: &Cont, vals: &[S]) -> Result<Option<Vec<S>>, SemanticsError> {
        let dim = self.inner[slot].as_ref();
        if let Some(Dim::Finite { values, .. }) = dim {
            let dim = dim.unwrap();
            return Ok(Some((0..values.len() as i64).map(|c| S::at(dim, c)).collect()));
        }
        // A following test `x = t` admits only t; so do a diamond
        // postcondition `x = t` and a box postcondition `x != t`.
        if let Some(t) = next_test(k).and_then(|c| c.conjuncts().into_iter().find_map(|c| equation_for(c, Some(slot)))) {
            return Ok(Some(vec![t.1.eval(vals)?]));
        }
        if let Some((_, t)) = fr.modal.pins.iter().find(|(s, _)| *s == slot) {
            return Ok(Some(vec![t.eval(vals)?]));
        }
        if fr.decide {
            return Ok(None);
        }
        let dim = dim.expect("random slot has a range");
        let mut out = vec![vals[slot].clone()];
        for i in 0..self.cfg.random_samples as u64 {
            out.push(S::at(dim, self.sample(dim, slot as u64, i)));
        }
        Ok(Some(out))
    }

    fn finish<S: SearchScalar>(&mut self, fr: &mut Frame, vals: &mut Vec<S>) -> Result<(), SemanticsError> {
        let r = self.goal(&fr.modal.post, fr.want, vals)?;
        if fr.decide {
            fr.acc = fr.acc.min(r.v);
            if r.v <= 0.0 {
                fr.stop = true;
            } else if self.record {
                fr.paths.push((ChoiceScript::new(fr.script.clone()), r.ev));
            }
        } else {
            fr.acc = fr.acc.max(r.v);
            if r.v > 0.0 {
                fr.stop = true;
                if let Some(ev) = r.ev {
                    fr.found = Some(Evidence::Modal { script: ChoiceScript::new(fr.script.clone()), post: Box::new(ev) });
                }
            }
        }
        Ok(())
    }

    /// The current execution aborted at a test with this (failing) margin,
    /// or could not be decided.
    fn abort(&mut self, fr: &mut Frame, margin: Option<f64>) {
        let Some(m) = margin else {
            self.unknown = true;
            if fr.decide {
                fr.acc = f64::NEG_INFINITY;
                fr.stop = true;
            }
            return;
        };
        if fr.decide {
            fr.acc = fr.acc.min(hit(-m));
            if self.record {
                fr.paths.push((ChoiceScript::new(fr.script.clone()), None));
            }
        } else {
            fr.acc = fr.acc.max(miss(m));
        }
    }
}

fn next_test<'p>(k: &Cont<'p>) -> Option<&'p Cond> {
    match k {
        Cont::Items([Prog::Test { cond, .. }, ..], _) => Some(cond),
        Cont::Items([Prog::Seq(items), ..], _) => match items.first() {
            Some(Prog::Test { cond, .. }) => Some(cond),
            _ => None,
        },
        Cont::Items([], rest) => next_test(rest),
        _ => None,
    }
}
