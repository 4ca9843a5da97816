//! ODE evolution. Plants whose solution is a polynomial of degree at most two
//! in time (constant-rate variables, and variables whose rate is one of those)
//! are solved in closed form with exact evolution-domain checks; everything
//! else goes through fixed-step RK4 with a grid-checked domain.

use num_bigint::BigInt;
use num_rational::BigRational;

use super::compile::{Compiler, Cond, Expr};
use super::SemanticsError;
use crate::ast::{CmpOp, FolFormula, HybridProgram, OdeSystem};
use crate::parser::print_program;
use crate::real::Scalar;

/// Tolerance used when a numerically integrated state is checked against the
/// evolution domain, and the bisection width for numeric maximal durations.
pub const NUMERIC_DOMAIN_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OdeOptions {
    /// Cap for evolutions the domain does not bound.
    pub horizon: BigRational,
    /// RK4 step.
    pub step: f64,
    /// Interior grid points for numeric domain checks.
    pub grid: usize,
    /// Skip the closed form even when it applies.
    pub force_numeric: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { horizon: BigRational::from_integer(BigInt::from(10)), step: 1e-3, grid: 64, force_numeric: false }
    }
}

#[derive(Clone, Debug)]
enum Rate {
    /// Rate free of evolving variables: linear solution.
    Constant(Expr),
    /// Rate is the evolving variable with this equation index: quadratic.
    Follows(usize),
}

#[derive(Clone, Debug)]
struct Template {
    rates: Vec<Rate>,
    atoms: Vec<(CmpOp, Expr, Expr)>,
}

#[derive(Clone, Debug)]
pub struct CompiledOde {
    /// Evolving slots, in equation order.
    pub vars: Vec<usize>,
    pub rates: Vec<Expr>,
    pub domain: Cond,
    pub domain_formula: FolFormula,
    pub label: String,
    template: Option<Template>,
    options: OdeOptions,
}

/// Polynomial solution `p0 + p1 t + p2 t^2` per evolving variable.
struct Solution<S> {
    coeffs: Vec<(S, S, S)>,
}

fn half<S: Scalar>() -> S {
    S::from_rational(&BigRational::new(BigInt::from(1), BigInt::from(2)))
}

impl CompiledOde {
    pub fn compile(c: &Compiler<'_>, sys: &OdeSystem) -> Result<CompiledOde, SemanticsError> {
        let vars = sys.equations.iter().map(|(x, _)| c.slot(x)).collect::<Result<Vec<_>, _>>()?;
        let rates = sys.equations.iter().map(|(_, t)| c.expr(t)).collect::<Result<Vec<_>, _>>()?;
        let domain = c.cond(&sys.domain)?;
        let label = print_program(&HybridProgram::Ode(sys.clone()));
        let template = if c.ode.force_numeric { None } else { build_template(&vars, &rates, &domain) };
        Ok(CompiledOde { vars, rates, domain, domain_formula: sys.domain.clone(), label, template, options: c.ode.clone() })
    }

    pub fn is_closed_form(&self) -> bool {
        self.template.is_some()
    }

    pub fn options(&self) -> &OdeOptions {
        &self.options
    }

    /// Evolve for `duration`; `None` when the domain fails somewhere on
    /// `[0, duration]`.
    pub fn evolve<S: Scalar>(&self, values: &[S], duration: &S) -> Result<Option<Vec<S>>, SemanticsError> {
        if duration.is_negative() {
            return Err(SemanticsError::NegativeDuration(duration.to_f64()));
        }
        match &self.template {
            Some(t) => {
                let sol = self.solve(t, values)?;
                for atom in &t.atoms {
                    if !atom_holds_on(&self.atom_poly(atom, &sol, values)?, atom.0, duration) {
                        return Ok(None);
                    }
                }
                Ok(Some(self.state_at(&sol, values, duration)))
            }
            None => self.evolve_numeric(values, duration),
        }
    }

    /// Supremum of the durations the domain admits, capped at the horizon.
    pub fn max_duration<S: Scalar>(&self, values: &[S]) -> Result<S, SemanticsError> {
        let horizon = S::from_rational(&self.options.horizon);
        match &self.template {
            Some(t) => {
                let sol = self.solve(t, values)?;
                let mut best = horizon;
                for atom in &t.atoms {
                    let q = self.atom_poly(atom, &sol, values)?;
                    match failure_time(&q, atom.0) {
                        Some(f) if f.compare(CmpOp::Lt, &best) => best = f,
                        _ => {}
                    }
                }
                Ok(best)
            }
            None => self.max_duration_numeric(values),
        }
    }

    fn solve<S: Scalar>(&self, t: &Template, values: &[S]) -> Result<Solution<S>, SemanticsError> {
        let constant_rate = |i: usize| -> Result<S, SemanticsError> {
            match &t.rates[i] {
                Rate::Constant(e) => e.eval(values),
                Rate::Follows(_) => unreachable!("template rates chain at most once"),
            }
        };
        let mut coeffs = Vec::with_capacity(self.vars.len());
        for (i, slot) in self.vars.iter().enumerate() {
            let p0 = values[*slot].clone();
            coeffs.push(match &t.rates[i] {
                Rate::Constant(_) => (p0, constant_rate(i)?, S::zero()),
                Rate::Follows(j) => (p0, values[self.vars[*j]].clone(), constant_rate(*j)?.mul(&half())),
            });
        }
        Ok(Solution { coeffs })
    }

    fn state_at<S: Scalar>(&self, sol: &Solution<S>, values: &[S], t: &S) -> Vec<S> {
        let mut out = values.to_vec();
        let t2 = t.mul(t);
        for (slot, (p0, p1, p2)) in self.vars.iter().zip(&sol.coeffs) {
            out[*slot] = p0.add(&p1.mul(t)).add(&p2.mul(&t2));
        }
        out
    }

    /// Coefficients of `lhs - rhs` along the solution, from its values at
    /// t = 0, 1, -1 (the atom has degree at most two in t).
    fn atom_poly<S: Scalar>(&self, atom: &(CmpOp, Expr, Expr), sol: &Solution<S>, values: &[S]) -> Result<(S, S, S), SemanticsError> {
        let at = |t: S| -> Result<S, SemanticsError> {
            let v = self.state_at(sol, values, &t);
            Ok(atom.1.eval(&v)?.sub(&atom.2.eval(&v)?))
        };
        let one = S::from_rational(&BigRational::from_integer(BigInt::from(1)));
        let c0 = at(S::zero())?;
        let d1 = at(one.clone())?;
        let dm1 = at(one.neg())?;
        let c1 = d1.sub(&dm1).mul(&half());
        let c2 = d1.add(&dm1).mul(&half()).sub(&c0);
        Ok((c0, c1, c2))
    }

    fn domain_ok(&self, values: &[f64]) -> bool {
        self.domain.margin_f64(values) >= -NUMERIC_DOMAIN_TOLERANCE
    }

    fn derivative(&self, values: &[f64]) -> Vec<f64> {
        self.rates.iter().map(|r| r.eval_f64(values)).collect()
    }

    fn rk4_step(&self, y: &mut [f64], h: f64) {
        let shifted = |base: &[f64], k: &[f64], scale: f64| -> Vec<f64> {
            let mut v = base.to_vec();
            for (slot, dk) in self.vars.iter().zip(k) {
                v[*slot] += scale * dk;
            }
            v
        };
        let k1 = self.derivative(y);
        let k2 = self.derivative(&shifted(y, &k1, h / 2.0));
        let k3 = self.derivative(&shifted(y, &k2, h / 2.0));
        let k4 = self.derivative(&shifted(y, &k3, h));
        for (i, slot) in self.vars.iter().enumerate() {
            y[*slot] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Integrate `span` time units in steps of at most `options.step`.
    fn integrate(&self, y: &mut [f64], span: f64) -> Result<(), SemanticsError> {
        if span <= 0.0 {
            return Ok(());
        }
        let steps = (span / self.options.step).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            self.rk4_step(y, h);
        }
        if self.vars.iter().any(|s| !y[*s].is_finite()) {
            return Err(SemanticsError::NumericBlowUp(self.label.clone()));
        }
        Ok(())
    }

    fn evolve_numeric<S: Scalar>(&self, values: &[S], duration: &S) -> Result<Option<Vec<S>>, SemanticsError> {
        let mut y: Vec<f64> = values.iter().map(Scalar::to_f64).collect();
        if !self.domain_ok(&y) {
            return Ok(None);
        }
        let d = duration.to_f64();
        if d == 0.0 {
            return Ok(Some(values.to_vec()));
        }
        let pieces = self.options.grid + 1;
        for _ in 0..pieces {
            self.integrate(&mut y, d / pieces as f64)?;
            if !self.domain_ok(&y) {
                return Ok(None);
            }
        }
        let mut out = values.to_vec();
        for slot in &self.vars {
            out[*slot] = S::inexact(y[*slot]);
        }
        Ok(Some(out))
    }

    fn max_duration_numeric<S: Scalar>(&self, values: &[S]) -> Result<S, SemanticsError> {
        let mut y: Vec<f64> = values.iter().map(Scalar::to_f64).collect();
        if !self.domain_ok(&y) {
            return Ok(S::zero());
        }
        let horizon = crate::real::rational_to_f64(&self.options.horizon);
        let h = self.options.step;
        let mut t = 0.0;
        while t < horizon {
            let span = h.min(horizon - t);
            let mut next = y.clone();
            self.integrate(&mut next, span)?;
            if !self.domain_ok(&next) {
                let (mut lo, mut hi) = (0.0, span);
                while hi - lo > NUMERIC_DOMAIN_TOLERANCE {
                    let mid = (lo + hi) / 2.0;
                    let mut probe = y.clone();
                    self.integrate(&mut probe, mid)?;
                    if self.domain_ok(&probe) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(S::inexact(t + lo));
            }
            y = next;
            t += span;
        }
        Ok(S::from_rational(&self.options.horizon))
    }
}

/// Degree in t of an expression, given the degrees of evolving slots;
/// `None` when it is not a polynomial in t.
fn degree(e: &Expr, deg: &dyn Fn(usize) -> u32) -> Option<u32> {
    Some(match e {
        Expr::Var(s) => deg(*s),
        Expr::Const(_) => 0,
        Expr::Add(a, b) | Expr::Sub(a, b) => degree(a, deg)?.max(degree(b, deg)?),
        Expr::Mul(a, b) => degree(a, deg)? + degree(b, deg)?,
        Expr::Neg(a) => degree(a, deg)?,
        Expr::Div(a, b) => {
            if degree(b, deg)? != 0 {
                return None;
            }
            degree(a, deg)?
        }
        Expr::Pow(a, n) => degree(a, deg)?.checked_mul(*n)?,
    })
}

fn build_template(vars: &[usize], rates: &[Expr], domain: &Cond) -> Option<Template> {
    let mentions_evolving = |e: &Expr| vars.iter().any(|s| e.mentions(*s));
    let mut kinds = Vec::with_capacity(rates.len());
    for r in rates {
        kinds.push(if !mentions_evolving(r) {
            Rate::Constant(r.clone())
        } else if let Expr::Var(s) = r {
            let j = vars.iter().position(|v| v == s)?;
            if mentions_evolving(&rates[j]) {
                return None;
            }
            Rate::Follows(j)
        } else {
            return None;
        });
    }
    let deg = |s: usize| match vars.iter().position(|v| *v == s) {
        None => 0,
        Some(i) => match kinds[i] {
            Rate::Constant(_) => 1,
            Rate::Follows(_) => 2,
        },
    };
    let mut atoms = Vec::new();
    for c in domain.conjuncts() {
        match c {
            Cond::True => {}
            Cond::Cmp(op, l, r) if *op != CmpOp::Ne => {
                if degree(l, &deg)?.max(degree(r, &deg)?) > 2 {
                    return None;
                }
                atoms.push((*op, l.clone(), r.clone()));
            }
            _ => return None,
        }
    }
    Some(Template { rates: kinds, atoms })
}

/// Orient an atom as `q >= 0` / `q > 0` / `q = 0`.
fn oriented<S: Scalar>(q: &(S, S, S), op: CmpOp) -> (S, S, S) {
    match op {
        CmpOp::Le | CmpOp::Lt => (q.0.neg(), q.1.neg(), q.2.neg()),
        _ => q.clone(),
    }
}

fn poly_at<S: Scalar>(q: &(S, S, S), t: &S) -> S {
    q.0.add(&q.1.mul(t)).add(&q.2.mul(&t.mul(t)))
}

fn atom_holds_on<S: Scalar>(q: &(S, S, S), op: CmpOp, r: &S) -> bool {
    let q = oriented(q, op);
    let zero = S::zero();
    let r_positive = r.compare(CmpOp::Gt, &zero);
    if op == CmpOp::Eq {
        return q.0.compare(CmpOp::Eq, &zero) && (!r_positive || (q.1.compare(CmpOp::Eq, &zero) && q.2.compare(CmpOp::Eq, &zero)));
    }
    let test = if matches!(op, CmpOp::Gt | CmpOp::Lt) { CmpOp::Gt } else { CmpOp::Ge };
    let mut candidates = vec![q.0.clone(), poly_at(&q, r)];
    if q.2.compare(CmpOp::Gt, &zero) {
        if let Some(vertex) = q.1.neg().div(&q.2.add(&q.2)) {
            if vertex.compare(CmpOp::Gt, &zero) && vertex.compare(CmpOp::Lt, r) {
                candidates.push(poly_at(&q, &vertex));
            }
        }
    }
    candidates.iter().all(|v| v.compare(test, &zero))
}

/// First time after which the atom stops holding; `None` when it never does.
/// Zero when it already fails at t = 0.
fn failure_time<S: Scalar>(q: &(S, S, S), op: CmpOp) -> Option<S> {
    let q = oriented(q, op);
    let zero = S::zero();
    let (c0, c1, c2) = (&q.0, &q.1, &q.2);
    if op == CmpOp::Eq {
        let holds0 = c0.compare(CmpOp::Eq, &zero);
        let constant = c1.compare(CmpOp::Eq, &zero) && c2.compare(CmpOp::Eq, &zero);
        return if holds0 && constant { None } else { Some(zero) };
    }
    let strict = matches!(op, CmpOp::Gt | CmpOp::Lt);
    if c0.compare(CmpOp::Lt, &zero) || (strict && c0.compare(CmpOp::Eq, &zero)) {
        return Some(zero);
    }
    if c2.compare(CmpOp::Eq, &zero) {
        return if c1.compare(CmpOp::Lt, &zero) { c0.neg().div(c1) } else { None };
    }
    let disc = c1.mul(c1).sub(&S::from_rational(&BigRational::from_integer(BigInt::from(4))).mul(c2).mul(c0));
    if disc.compare(CmpOp::Lt, &zero) {
        return None;
    }
    let root = disc.sqrt()?;
    let denom = c2.add(c2);
    let r1 = c1.neg().sub(&root).div(&denom)?;
    let r2 = c1.neg().add(&root).div(&denom)?;
    let (lo, hi) = if r1.compare(CmpOp::Le, &r2) { (r1, r2) } else { (r2, r1) };
    if c2.compare(CmpOp::Lt, &zero) {
        // Negative outside [lo, hi]; 0 lies inside.
        Some(if hi.compare(CmpOp::Lt, &zero) { zero } else { hi })
    } else if lo.compare(CmpOp::Eq, &hi) || hi.compare(CmpOp::Le, &zero) {
        None
    } else if lo.compare(CmpOp::Lt, &zero) {
        // q(0) >= 0 with 0 in (lo, hi) only when q(0) = 0 at the upper root.
        Some(zero)
    } else {
        Some(lo)
    }
}
