//! Exact rational helpers on top of `num-rational`.
//!
//! Every slope, offset and threshold in this crate is held as a
//! [`Rational`]. Decimal inputs are parsed digit for digit, and binary floats
//! are converted through their exact dyadic value, so nothing is rounded at
//! ingestion.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational number.
pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseRationalError {
    #[error("empty number")]
    Empty,
    #[error("malformed number `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("exponent out of range in `{0}`")]
    Exponent(String),
    #[error("non-finite float {0}")]
    NonFinite(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("value {0} does not fit in a 64-bit integer")]
pub struct IntegerOverflow(pub String);

/// Parses `"0.618"`, `"-1.5e-3"`, `".5"`, `"42"` or `"3/4"` exactly.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = parse_decimal(num.trim(), text)?;
        let den = parse_decimal(den.trim(), text)?;
        if den.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(text.to_string()));
        }
        return Ok(num / den);
    }
    parse_decimal(s, text)
}

// Exponents beyond this are rejected rather than materialised as huge integers.
const MAX_EXPONENT: i64 = 4096;

fn parse_decimal(s: &str, original: &str) -> Result<Rational, ParseRationalError> {
    let malformed = || ParseRationalError::Malformed(original.to_string());
    let (negative, body) = match s.as_bytes().first() {
        Some(b'-') => (true, &s[1..]),
        Some(b'+') => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => {
            let exp: i64 = body[pos + 1..].parse().map_err(|_| malformed())?;
            (&body[..pos], exp)
        }
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(malformed());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|c| c.is_ascii_digit()) {
        return Err(malformed());
    }
    let shift = exponent - frac_part.len() as i64;
    if shift.abs() > MAX_EXPONENT {
        return Err(ParseRationalError::Exponent(original.to_string()));
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigInt::from_str(&digits).map_err(|_| malformed())?;
    if negative {
        value = -value;
    }
    let scale = BigInt::from(10u32).pow(shift.unsigned_abs() as u32);
    Ok(if shift >= 0 {
        Rational::from_integer(value * scale)
    } else {
        Rational::new(value, scale)
    })
}

/// Exact value of a finite binary float.
pub fn from_f64(x: f64) -> Result<Rational, ParseRationalError> {
    Rational::from_float(x).ok_or_else(|| ParseRationalError::NonFinite(x.to_string()))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn floor_big(x: &Rational) -> BigInt {
    x.numer().div_floor(x.denom())
}

pub fn ceil_big(x: &Rational) -> BigInt {
    -((-x.numer()).div_floor(x.denom()))
}

pub fn to_i64(x: &BigInt) -> Result<i64, IntegerOverflow> {
    x.to_i64().ok_or_else(|| IntegerOverflow(x.to_string()))
}

pub fn floor_i64(x: &Rational) -> Result<i64, IntegerOverflow> {
    to_i64(&floor_big(x))
}

pub fn ceil_i64(x: &Rational) -> Result<i64, IntegerOverflow> {
    to_i64(&ceil_big(x))
}

/// Round half toward negative infinity.
pub fn round_i64(x: &Rational) -> Result<i64, IntegerOverflow> {
    let half = Rational::new(BigInt::one(), BigInt::from(2));
    ceil_i64(&(x - half))
}

/// Lossy view for diagnostics only.
pub fn approx_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise.
pub fn to_string(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Display adapter printing the exact value alongside a decimal approximation.
pub struct Show<'a>(pub &'a Rational);

impl fmt::Display for Show<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{} (~{:.6})", to_string(self.0), approx_f64(self.0))
        }
    }
}
