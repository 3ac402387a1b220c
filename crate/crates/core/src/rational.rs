//! Exact rational time values used throughout the logic layer.

use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = num_rational::Rational64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid rational literal {0:?}")]
pub struct RationalParseError(pub String);

/// Parses `"7"`, `"17.3"`, `"-0.25"` or `"173/10"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational, RationalParseError> {
    let err = || RationalParseError(s.to_string());
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| err())?;
        let d: i64 = d.trim().parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    if frac_part.len() > 15 {
        return Err(err());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| err())? };
    let denom = 10i64.checked_pow(frac_part.len() as u32).ok_or_else(err)?;
    let r = Rational::new(numer, denom);
    Ok(if neg { -r } else { r })
}

/// Converts a float through its shortest round-trip decimal form, so `0.1`
/// becomes exactly `1/10`.
pub fn rational_from_f64(x: f64) -> Result<Rational, RationalParseError> {
    if !x.is_finite() {
        return Err(RationalParseError(x.to_string()));
    }
    let s = format!("{x}");
    if s.contains('e') {
        return Err(RationalParseError(s));
    }
    parse_rational(&s)
}

/// `"p"` for integers, `"p/q"` otherwise.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Greatest common divisor of nonzero rationals: the largest `g` such that
/// every input is an integer multiple of `g`. Zeros are ignored.
pub fn rational_gcd<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Option<Rational> {
    let mut acc: Option<Rational> = None;
    for v in values {
        if v.is_zero() {
            continue;
        }
        let v = v.abs();
        acc = Some(match acc {
            None => v,
            Some(a) => {
                let num = (a.numer() * v.denom()).gcd(&(v.numer() * a.denom()));
                Rational::new(num, a.denom() * v.denom())
            }
        });
    }
    acc
}

/// Serde adapter storing a rational as its `"p/q"` string.
pub mod serde_rational {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Str(String),
        Int(i64),
        Float(f64),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Str(s) => parse_rational(&s).map_err(de::Error::custom),
            Raw::Int(i) => Ok(Rational::from_integer(i)),
            Raw::Float(f) => rational_from_f64(f).map_err(de::Error::custom),
        }
    }
}
