//! Exact rational scalars plus the float bridges used for logarithms.
//!
//! Probability masses stay exact end to end; only logarithmic quantities
//! are evaluated in `f64`. Conversions go through a bit-length-normalized
//! base-2 log so that ratios of astronomically large integers still come
//! out finite.

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

/// Arbitrary-precision rational, kept in lowest terms by `num`.
pub type Rat = BigRational;

/// `n/d` as a [`Rat`]. Panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Integer `n` as a [`Rat`].
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parses `"n/d"` or a bare integer `"n"`.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let bad = || Error::InvalidInput(format!("bad rational `{s}`"));
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(Error::InvalidInput(format!("zero denominator in `{s}`")));
    }
    Ok(Rat::new(n, d))
}

/// Canonical `"n/d"` rendering; the denominator is always printed.
pub fn format_rat(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Base-2 log of a positive integer, exact to f64 precision for any size.
fn log2_bigint(n: &BigInt) -> f64 {
    assert!(n.is_positive(), "log2 of a non-positive integer");
    let bits = n.bits();
    if bits <= 53 {
        n.to_f64().expect("small BigInt fits f64").log2()
    } else {
        let shift = bits - 53;
        let top = (n >> shift).to_f64().expect("53-bit BigInt fits f64");
        top.log2() + shift as f64
    }
}

/// Base-2 log of a positive rational.
pub fn log2_rat(r: &Rat) -> f64 {
    assert!(r.is_positive(), "log2 of a non-positive rational");
    log2_bigint(r.numer()) - log2_bigint(r.denom())
}

/// Natural log of a positive rational.
pub fn ln_rat(r: &Rat) -> f64 {
    log2_rat(r) * std::f64::consts::LN_2
}

/// Nearest f64, falling back to a log-scaled estimate when numerator or
/// denominator overflow f64 on their own.
pub fn rat_to_f64(r: &Rat) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let mag = log2_rat(&r.abs()).exp2();
    if r.is_negative() {
        -mag
    } else {
        mag
    }
}

/// `1/1` as a [`Rat`].
pub fn rat_one() -> Rat {
    Rat::one()
}

/// `0/1` as a [`Rat`].
pub fn rat_zero() -> Rat {
    Rat::zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["1/3", "-7/2", "0/1", "5/1"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(format_rat(&r), s);
        }
        assert_eq!(format_rat(&parse_rat("4").unwrap()), "4/1");
        assert_eq!(format_rat(&parse_rat("6/4").unwrap()), "3/2");
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn log2_handles_huge_ratios() {
        let big = Rat::new(BigInt::from(3).pow(600), BigInt::from(2).pow(700));
        let expect = 600.0 * 3f64.log2() - 700.0;
        assert!((log2_rat(&big) - expect).abs() < 1e-9);
        let v = rat_to_f64(&big);
        assert!(v.is_finite() && v > 0.0);
        assert!((v.log2() - expect).abs() < 1e-9);
    }

    #[test]
    fn to_f64_matches_small_values() {
        assert_eq!(rat_to_f64(&rat(1, 4)), 0.25);
        assert_eq!(rat_to_f64(&rat(-3, 2)), -1.5);
        assert_eq!(rat_to_f64(&rat_zero()), 0.0);
    }
}
