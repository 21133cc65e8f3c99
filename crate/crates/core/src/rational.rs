//! Exact rational numbers used for all probabilities and LP arithmetic.
//!
//! Probabilities, LP coefficients, multipliers — everything in this crate is
//! an arbitrary-precision rational. There are no floating-point values and no
//! tolerances; every comparison is exact.

use alloc::string::String;
use alloc::string::ToString;
use core::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Arbitrary-precision rational number.
pub type Rational = num_rational::BigRational;

/// Errors from [`parse_rational`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseRationalError {
    /// The token was empty.
    #[error("empty rational token")]
    Empty,
    /// A numerator or denominator was not a decimal integer.
    #[error("invalid integer in rational token `{0}`")]
    InvalidInteger(String),
    /// The denominator was zero.
    #[error("zero denominator in rational token `{0}`")]
    ZeroDenominator(String),
}

/// Shorthand for the rational `numer/denom`.
///
/// Panics if `denom` is zero.
pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Shorthand for an integer as a rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `p`, `-p`, `p/q`, or `-p/q` (decimal integers, no whitespace).
pub fn parse_rational(token: &str) -> Result<Rational, ParseRationalError> {
    if token.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let bad = || ParseRationalError::InvalidInteger(token.to_string());
    match token.split_once('/') {
        None => {
            let n = BigInt::from_str(token).map_err(|_| bad())?;
            Ok(Rational::from_integer(n))
        }
        Some((numer, denom)) => {
            let n = BigInt::from_str(numer).map_err(|_| bad())?;
            let d = BigInt::from_str(denom).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(ParseRationalError::ZeroDenominator(token.to_string()));
            }
            Ok(Rational::new(n, d))
        }
    }
}

/// Renders a rational in the same form [`parse_rational`] accepts:
/// `p` when the (reduced) denominator is 1, otherwise `p/q`.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        alloc::format!("{}/{}", r.numer(), r.denom())
    }
}

/// True iff `0 <= r <= 1`.
pub fn is_probability(r: &Rational) -> bool {
    !r.is_negative() && *r <= Rational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["0", "1", "-3", "1/2", "-7/3", "2/4", "10/5"] {
            let r = parse_rational(s).unwrap();
            let back = parse_rational(&format_rational(&r)).unwrap();
            assert_eq!(r, back);
        }
        // Reduction is canonical: 2/4 renders as 1/2, 10/5 as 2.
        assert_eq!(format_rational(&parse_rational("2/4").unwrap()), "1/2");
        assert_eq!(format_rational(&parse_rational("10/5").unwrap()), "2");
        assert_eq!(format_rational(&parse_rational("-2/4").unwrap()), "-1/2");
    }

    #[test]
    fn parse_rejects_malformed_tokens() {
        assert_eq!(parse_rational(""), Err(ParseRationalError::Empty));
        assert!(matches!(
            parse_rational("1/0"),
            Err(ParseRationalError::ZeroDenominator(_))
        ));
        for s in ["a", "1/b", "1.5", "1/2/3", "1 /2", "/2", "1/"] {
            assert!(
                matches!(parse_rational(s), Err(ParseRationalError::InvalidInteger(_))),
                "expected InvalidInteger for {s:?}"
            );
        }
    }

    #[test]
    fn probability_range_is_closed() {
        assert!(is_probability(&int(0)));
        assert!(is_probability(&int(1)));
        assert!(is_probability(&rat(1, 2)));
        assert!(!is_probability(&rat(-1, 2)));
        assert!(!is_probability(&rat(3, 2)));
    }
}
