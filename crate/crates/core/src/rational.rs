//! Exact rational helpers.
//!
//! Floats enter exact arithmetic through their shortest round-trip decimal
//! representation, so `0.1` becomes `1/10` rather than the binary expansion
//! of the nearest double.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn pow2(p: u32) -> Rational {
    Rational::from_integer(BigInt::one() << p as usize)
}

/// Parses a decimal (`-12.5e-3`) or fraction (`3/8`) literal exactly.
pub fn parse(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::Validation(format!("not a rational number: {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all = format!("{whole}{frac}");
    let numer: BigInt = if all.is_empty() { BigInt::zero() } else { all.parse().map_err(|_| bad())? };
    let scale = exp - frac.len() as i64;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// Exact rational with the same decimal digits as `x`'s shortest representation.
pub fn from_f64(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        return Err(Error::Validation(format!("non-finite number {x}")));
    }
    parse(&format!("{x}"))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `Some(p)` when `r == 2^p` for an integer `p >= 0`.
pub fn log2_exact(r: &Rational) -> Option<u32> {
    if !r.is_integer() || !r.is_positive() {
        return None;
    }
    let n = r.numer();
    let bits = n.bits();
    if (n.clone() & (n.clone() - BigInt::one())).is_zero() {
        Some((bits - 1) as u32)
    } else {
        None
    }
}

/// Smallest `p >= 0` with `2^p >= r`.
pub fn ceil_log2(r: &Rational) -> u32 {
    let c = ceil(r);
    if c <= BigInt::one() {
        return 0;
    }
    (c - BigInt::one()).bits() as u32
}

/// Largest `p >= 0` with `2^p <= r`, if `r >= 1`.
pub fn floor_log2(r: &Rational) -> Option<u32> {
    let f = floor(r);
    if f < BigInt::one() {
        return None;
    }
    Some((f.bits() - 1) as u32)
}

fn floor(r: &Rational) -> BigInt {
    r.numer().div_floor(r.denom())
}

fn ceil(r: &Rational) -> BigInt {
    r.numer().div_ceil(r.denom())
}

/// Canonical text form: `p/q`, or `p` for integers.
pub fn display(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
