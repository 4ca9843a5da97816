//! Random executions: initial states drawn from the domains until `init`
//! holds, then every decision drawn on the fly.

use std::collections::BTreeMap;
use std::sync::Arc;

use hpcheck::model::{Domain, Model};
use hpcheck::real::Real;
use hpcheck::semantics::{eval_fol, eval_term, run_driven, ChoiceScript, Compiler, Decision, Need, OdeOptions, Outcome, SemanticsError, Side, State, Trace, VarTable};
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sampled values are multiples of this.
const GRAIN: i64 = 1000;

const INIT_ATTEMPTS: usize = 10_000;

pub struct Execution {
    pub initial: State<Real>,
    pub script: ChoiceScript,
    pub outcome: Outcome<Real>,
    pub trace: Trace<Real>,
}

enum Range {
    Interval(BigRational, BigRational),
    Finite(Vec<BigRational>),
}

pub struct Sampler<'m> {
    model: &'m Model,
    vars: Arc<VarTable>,
    ranges: BTreeMap<String, Range>,
    base: State<Real>,
}

fn bound(state: &State<Real>, t: &hpcheck::ast::Term) -> Result<BigRational, SemanticsError> {
    eval_term(state, t)?.to_rational().ok_or_else(|| SemanticsError::Undecided("domain bound".into()))
}

impl<'m> Sampler<'m> {
    pub fn new(model: &'m Model, base: State<Real>) -> Result<Sampler<'m>, SemanticsError> {
        let mut ranges = BTreeMap::new();
        for (name, d) in &model.domains {
            let r = match d {
                Domain::Interval { lo, hi } => Range::Interval(bound(&base, lo)?, bound(&base, hi)?),
                Domain::Finite(values) => Range::Finite(values.iter().map(|t| bound(&base, t)).collect::<Result<_, _>>()?),
            };
            ranges.insert(name.clone(), r);
        }
        Ok(Sampler { model, vars: base.vars().clone(), ranges, base })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, var: &str) -> Real {
        let (lo, hi) = match self.ranges.get(var) {
            Some(Range::Finite(values)) if !values.is_empty() => return Real::Exact(values[rng.gen_range(0..values.len())].clone()),
            Some(Range::Interval(lo, hi)) => (lo.clone(), hi.clone()),
            _ => (BigRational::from_integer((-10).into()), BigRational::from_integer(10.into())),
        };
        // Ends get extra weight so equalities in `init` such as `v = 0` are hit.
        match rng.gen_range(0..8) {
            0 => return Real::Exact(lo),
            1 => return Real::Exact(hi),
            _ => {}
        }
        let grain = BigRational::from_integer(GRAIN.into());
        let span = ((&hi - &lo) * &grain).floor().to_integer();
        let steps: i64 = span.try_into().unwrap_or(0);
        let k = if steps > 0 { rng.gen_range(0..=steps) } else { 0 };
        Real::Exact(lo + BigRational::from_integer(k.into()) / grain)
    }

    /// A state satisfying `init`, drawing every domain-constrained variable.
    pub fn initial(&self, rng: &mut ChaCha8Rng) -> Result<Option<State<Real>>, SemanticsError> {
        for _ in 0..INIT_ATTEMPTS {
            let mut s = self.base.clone();
            for v in &self.model.variables {
                if self.ranges.contains_key(v) {
                    s = s.with(v, self.draw(rng, v))?;
                }
            }
            if eval_fol(&s, &self.model.init)? {
                return Ok(Some(s));
            }
        }
        Ok(None)
    }

    pub fn execute(&self, rng: &mut ChaCha8Rng, initial: State<Real>, max_iterations: usize) -> Result<Execution, SemanticsError> {
        let opts = OdeOptions::default();
        let prog = Compiler::new(&self.vars, &opts).prog(&self.model.system())?;
        let mut choose = |need: Need<'_, Real>, _: &[Real]| match need {
            Need::Loop => Decision::LoopCount(rng.gen_range(1..=max_iterations.max(1))),
            Need::Branch => Decision::Branch(if rng.gen_bool(0.5) { Side::Left } else { Side::Right }),
            Need::Random { var } => Decision::Random { var: Some(var.to_string()), value: self.draw(rng, var) },
            Need::Duration { max } => {
                let k: i64 = rng.gen_range(0..=GRAIN);
                let frac = Real::Exact(BigRational::new(k.into(), GRAIN.into()));
                Decision::Duration(hpcheck::real::Scalar::mul(&max, &frac))
            }
        };
        let (outcome, trace, script) = run_driven(&initial, &prog, &mut choose)?;
        Ok(Execution { initial, script, outcome, trace })
    }
}
