//! Scalar arithmetic shared by search (binary floating point) and certification
//! (exact rationals with a floating-point fallback).

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::ast::CmpOp;

/// Absolute tolerance below which an inexact comparison is treated as undecided.
pub const NUMERIC_PADDING: f64 = 1e-9;

/// Parse a decimal literal such as `1.8`, `-3` or `0.125` into an exact rational.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    if digits.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut numer: BigInt = if int_part.is_empty() { BigInt::zero() } else { int_part.parse().ok()? };
    let mut denom = BigInt::one();
    for ch in frac_part.chars() {
        numer = numer * 10 + BigInt::from(ch.to_digit(10)?);
        denom *= 10;
    }
    let value = BigRational::new(numer, denom);
    Some(if negative { -value } else { value })
}

/// Parse either a decimal literal or a fraction `p/q`.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    match text.split_once('/') {
        Some((p, q)) => {
            let p = parse_decimal(p.trim())?;
            let q = parse_decimal(q.trim())?;
            if q.is_zero() {
                None
            } else {
                Some(p / q)
            }
        }
        None => parse_decimal(text.trim()),
    }
}

/// Decimal rendering when the expansion terminates (denominator of the form 2^a 5^b).
pub fn terminating_decimal(value: &BigRational) -> Option<String> {
    let mut denom = value.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0u32, 0u32);
    while denom.is_multiple_of(&two) {
        denom /= &two;
        twos += 1;
    }
    while denom.is_multiple_of(&five) {
        denom /= &five;
        fives += 1;
    }
    if !denom.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = value * BigRational::from_integer(BigInt::from(10).pow(places));
    let scaled = scaled.to_integer();
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    if places == 0 {
        return Some(if negative { format!("-{digits}") } else { digits });
    }
    let places = places as usize;
    let padded = if digits.len() <= places {
        format!("{}{}", "0".repeat(places + 1 - digits.len()), digits)
    } else {
        digits
    };
    let (int_part, frac_part) = padded.split_at(padded.len() - places);
    let sign = if negative { "-" } else { "" };
    Some(format!("{sign}{int_part}.{frac_part}"))
}

/// Human-readable exact rendering: a terminating decimal when possible, else `p/q`.
pub fn format_rational(value: &BigRational) -> String {
    terminating_decimal(value).unwrap_or_else(|| format!("{}/{}", value.numer(), value.denom()))
}

pub fn rational_to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Exact conversion of a finite double into a rational.
pub fn f64_to_rational(value: f64) -> Option<BigRational> {
    BigRational::from_float(value)
}

/// A rational constant paired with its nearest double.
#[derive(Clone, Debug, PartialEq)]
pub struct Constant {
    pub exact: BigRational,
    pub approx: f64,
}

impl Constant {
    pub fn new(exact: BigRational) -> Self {
        let approx = rational_to_f64(&exact);
        Constant { exact, approx }
    }
}

/// Arithmetic needed by the evaluator. Implemented for `f64` (search) and
/// [`Real`] (certification and replay).
pub trait Scalar: Clone + fmt::Debug + Send + Sync + 'static {
    fn from_rational(value: &BigRational) -> Self;
    fn from_constant(value: &Constant) -> Self {
        Self::from_rational(&value.exact)
    }
    fn from_f64(value: f64) -> Self;
    /// A floating-point result of an approximate computation.
    fn inexact(value: f64) -> Self;
    fn from_real(value: &Real) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    /// `None` when the divisor is zero.
    fn div(&self, other: &Self) -> Option<Self>;
    fn powi(&self, exponent: u32) -> Self;
    /// Square root; exact for [`Real`] only on perfect squares. `None` for
    /// negative input.
    fn sqrt(&self) -> Option<Self>;
    fn to_f64(&self) -> f64;
    fn is_exact(&self) -> bool;
    fn is_finite(&self) -> bool;
    /// Plain comparison (floating point compares directly).
    fn compare(&self, op: CmpOp, other: &Self) -> bool;
    /// Comparison that refuses to decide inexact values closer than
    /// [`NUMERIC_PADDING`].
    fn compare_strict(&self, op: CmpOp, other: &Self) -> Option<bool>;

    fn zero() -> Self {
        Self::from_rational(&BigRational::zero())
    }
    fn is_negative(&self) -> bool {
        self.compare(CmpOp::Lt, &Self::zero())
    }
}

fn float_compare(op: CmpOp, l: f64, r: f64) -> bool {
    match op {
        CmpOp::Ge => l >= r,
        CmpOp::Gt => l > r,
        CmpOp::Le => l <= r,
        CmpOp::Lt => l < r,
        CmpOp::Eq => l == r,
        CmpOp::Ne => l != r,
    }
}

fn padded_compare(op: CmpOp, l: f64, r: f64) -> Option<bool> {
    if !l.is_finite() || !r.is_finite() {
        return None;
    }
    let d = l - r;
    if d.abs() <= NUMERIC_PADDING {
        return None;
    }
    Some(float_compare(op, l, r))
}

impl Scalar for f64 {
    fn from_rational(value: &BigRational) -> Self {
        rational_to_f64(value)
    }
    fn from_constant(value: &Constant) -> Self {
        value.approx
    }
    fn from_f64(value: f64) -> Self {
        value
    }
    fn inexact(value: f64) -> Self {
        value
    }
    fn from_real(value: &Real) -> Self {
        value.to_f64()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, other: &Self) -> Option<Self> {
        if *other == 0.0 {
            None
        } else {
            Some(self / other)
        }
    }
    fn powi(&self, exponent: u32) -> Self {
        let mut acc = 1.0;
        for _ in 0..exponent {
            acc *= self;
        }
        acc
    }
    fn sqrt(&self) -> Option<Self> {
        if *self < 0.0 {
            None
        } else {
            Some(f64::sqrt(*self))
        }
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_exact(&self) -> bool {
        false
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn compare(&self, op: CmpOp, other: &Self) -> bool {
        float_compare(op, *self, *other)
    }
    fn compare_strict(&self, op: CmpOp, other: &Self) -> Option<bool> {
        if self.is_nan() || other.is_nan() {
            None
        } else {
            Some(float_compare(op, *self, *other))
        }
    }
    fn zero() -> Self {
        0.0
    }
}

/// A real number that stays an exact rational until an operation forces
/// floating point.
#[derive(Clone, Debug, PartialEq)]
pub enum Real {
    Exact(BigRational),
    Approx(f64),
}

impl Real {
    pub fn exact(value: BigRational) -> Self {
        Real::Exact(value)
    }

    pub fn from_int(value: i64) -> Self {
        Real::Exact(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Real::Exact(r) => Some(r),
            Real::Approx(_) => None,
        }
    }

    /// Best exact rational for this value (exact conversion for doubles).
    pub fn to_rational(&self) -> Option<BigRational> {
        match self {
            Real::Exact(r) => Some(r.clone()),
            Real::Approx(x) => f64_to_rational(*x),
        }
    }

    fn binary(&self, other: &Self, exact: impl Fn(&BigRational, &BigRational) -> BigRational, approx: impl Fn(f64, f64) -> f64) -> Self {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(exact(a, b)),
            _ => Real::Approx(approx(self.to_f64(), other.to_f64())),
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Real::Exact(r) => f.write_str(&format_rational(r)),
            Real::Approx(x) => write!(f, "~{x}"),
        }
    }
}

impl Scalar for Real {
    fn from_rational(value: &BigRational) -> Self {
        Real::Exact(value.clone())
    }
    fn from_f64(value: f64) -> Self {
        match f64_to_rational(value) {
            Some(r) => Real::Exact(r),
            None => Real::Approx(value),
        }
    }
    fn inexact(value: f64) -> Self {
        Real::Approx(value)
    }
    fn from_real(value: &Real) -> Self {
        value.clone()
    }
    fn add(&self, other: &Self) -> Self {
        self.binary(other, |a, b| a + b, |a, b| a + b)
    }
    fn sub(&self, other: &Self) -> Self {
        self.binary(other, |a, b| a - b, |a, b| a - b)
    }
    fn mul(&self, other: &Self) -> Self {
        self.binary(other, |a, b| a * b, |a, b| a * b)
    }
    fn neg(&self) -> Self {
        match self {
            Real::Exact(a) => Real::Exact(-a),
            Real::Approx(x) => Real::Approx(-x),
        }
    }
    fn div(&self, other: &Self) -> Option<Self> {
        match (self, other) {
            (_, Real::Exact(b)) if b.is_zero() => None,
            (Real::Exact(a), Real::Exact(b)) => Some(Real::Exact(a / b)),
            _ => {
                let d = other.to_f64();
                if d == 0.0 {
                    None
                } else {
                    Some(Real::Approx(self.to_f64() / d))
                }
            }
        }
    }
    fn powi(&self, exponent: u32) -> Self {
        match self {
            Real::Exact(a) => Real::Exact(num_traits::pow(a.clone(), exponent as usize)),
            Real::Approx(x) => Real::Approx(f64::powi(*x, exponent as i32)),
        }
    }
    fn sqrt(&self) -> Option<Self> {
        if let Real::Exact(r) = self {
            if r.is_negative() {
                return None;
            }
            let (n, d) = (r.numer().sqrt(), r.denom().sqrt());
            if &(&n * &n) == r.numer() && &(&d * &d) == r.denom() {
                return Some(Real::Exact(BigRational::new(n, d)));
            }
        }
        let x = self.to_f64();
        if x < 0.0 {
            None
        } else {
            Some(Real::Approx(x.sqrt()))
        }
    }
    fn to_f64(&self) -> f64 {
        match self {
            Real::Exact(a) => rational_to_f64(a),
            Real::Approx(x) => *x,
        }
    }
    fn is_exact(&self) -> bool {
        matches!(self, Real::Exact(_))
    }
    fn is_finite(&self) -> bool {
        match self {
            Real::Exact(_) => true,
            Real::Approx(x) => x.is_finite(),
        }
    }
    fn compare(&self, op: CmpOp, other: &Self) -> bool {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => op.holds(a.cmp(b)),
            _ => float_compare(op, self.to_f64(), other.to_f64()),
        }
    }
    fn compare_strict(&self, op: CmpOp, other: &Self) -> Option<bool> {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => Some(op.holds(a.cmp(b))),
            _ => padded_compare(op, self.to_f64(), other.to_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse_decimal("1.8"), Some(q(9, 5)));
        assert_eq!(parse_decimal("-0.125"), Some(q(-1, 8)));
        assert_eq!(parse_decimal("3"), Some(q(3, 1)));
        assert_eq!(parse_decimal(".5"), Some(q(1, 2)));
        assert_eq!(parse_decimal("1.2.3"), None);
        assert_eq!(parse_decimal("-"), None);
        assert_eq!(parse_rational("9/10"), Some(q(9, 10)));
        assert_eq!(parse_rational("1/0"), None);
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(terminating_decimal(&q(9, 10)).as_deref(), Some("0.9"));
        assert_eq!(terminating_decimal(&q(-27, 50)).as_deref(), Some("-0.54"));
        assert_eq!(terminating_decimal(&q(7, 1)).as_deref(), Some("7"));
        assert_eq!(terminating_decimal(&q(1, 3)), None);
        assert_eq!(format_rational(&q(1, 3)), "1/3");
        assert_eq!(terminating_decimal(&q(1, 1024)).as_deref(), Some("0.0009765625"));
    }

    #[test]
    fn real_stays_exact_until_sqrt() {
        let v = Real::Exact(q(9, 5));
        let sq = v.mul(&v);
        let denom = Real::from_int(6);
        assert_eq!(sq.div(&denom), Some(Real::Exact(q(27, 50))));
        assert_eq!(sq.sqrt(), Some(v));
        assert!(!Real::from_int(2).sqrt().unwrap().is_exact());
        assert_eq!(Real::from_int(1).div(&Real::from_int(0)), None);
    }

    #[test]
    fn strict_compare_pads_inexact_values() {
        let a = Real::Approx(1.0);
        let b = Real::Approx(1.0 + 1e-12);
        assert_eq!(a.compare_strict(CmpOp::Le, &b), None);
        assert_eq!(Real::from_int(1).compare_strict(CmpOp::Le, &Real::from_int(1)), Some(true));
        assert_eq!(Real::Approx(2.0).compare_strict(CmpOp::Gt, &Real::from_int(1)), Some(true));
    }
}
