//! Scalar backends.
//!
//! Every analytic routine in the crate is generic over [`Scalar`]. Two
//! families of implementations exist: the exact backend ([`Rational`]) and
//! the floating backends (`f64`, `f32`). Code that needs to branch on
//! exactness (rank decisions, zero tests) goes through [`Scalar::is_negligible`]
//! rather than comparing with zero directly.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational number used by the exact backend.
pub type Rational = BigRational;

pub trait Scalar:
    Num + Signed + Clone + Debug + Display + PartialOrd + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// `true` for the exact backend.
    const EXACT: bool;
    /// Short backend name used in reports.
    const BACKEND: &'static str;

    /// Nearest representable value of a rational number.
    fn from_rational(r: &Rational) -> Self;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Zero test. Exact backends ignore `scale` and test for exact zero;
    /// floating backends treat values below `tol * scale` as zero.
    fn is_negligible(&self, scale: f64, tol: f64) -> bool;

    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer conversion")
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    const BACKEND: &'static str = "exact";

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn is_negligible(&self, _scale: f64, _tol: f64) -> bool {
        self.is_zero()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const BACKEND: &'static str = "float";

    fn from_rational(r: &Rational) -> Self {
        rational_to_f64(r)
    }

    fn is_negligible(&self, scale: f64, tol: f64) -> bool {
        self.abs() <= tol * scale.max(f64::MIN_POSITIVE)
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;
    const BACKEND: &'static str = "float32";

    fn from_rational(r: &Rational) -> Self {
        rational_to_f64(r) as f32
    }

    fn is_negligible(&self, scale: f64, tol: f64) -> bool {
        (self.abs() as f64) <= tol * scale.max(f64::MIN_POSITIVE)
    }
}

/// Nearest-double conversion that survives numerators and denominators far
/// outside the `f64` range (factorial-sized contact-matrix entries).
pub fn rational_to_f64(r: &Rational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let numer = r.numer();
    let denom = r.denom();
    let shift = numer.bits() as i64 - denom.bits() as i64;
    // Rescale so the quotient is near 1, then restore the binary exponent.
    let (n, d) = if shift > 60 {
        (numer.clone(), denom << (shift - 60) as usize)
    } else if shift < -60 {
        (numer << (-shift - 60) as usize, denom.clone())
    } else {
        (numer.clone(), denom.clone())
    };
    let q = BigRational::new(n, d).to_f64().unwrap_or(0.0);
    let exp = if shift > 60 {
        shift - 60
    } else if shift < -60 {
        shift + 60
    } else {
        0
    };
    q * 2f64.powi(exp as i32)
}

/// Parses `"p/q"`, `"p"`, or a plain decimal such as `"-0.125"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        let q = BigInt::from_str(q.trim()).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        if q.is_zero() {
            return Err(Error::Parse(format!("{s:?}: zero denominator")));
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        let numer =
            BigInt::from_str(&digits).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        let denom = num_traits::pow(BigInt::from(10u8), frac.len());
        let r = BigRational::new(numer, denom);
        return Ok(if neg { -r } else { r });
    }
    let p = BigInt::from_str(s).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
    Ok(BigRational::from_integer(p))
}

/// Canonical `"p/q"` rendering (`"p"` when the denominator is one).
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rat(p: i64, q: i64) -> Rational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

pub fn rat_int(p: i64) -> Rational {
    BigRational::from_integer(BigInt::from(p))
}

/// Renders a float with 12 significant digits.
pub fn format_float(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.*e}", 11, v);
    // Normalise through f64 parsing so trailing zeros disappear.
    let parsed: f64 = s.parse().unwrap_or(v);
    format!("{parsed}")
}

/// Decimal rendering of a rational, 12 significant digits.
pub fn rational_decimal(r: &Rational) -> String {
    format_float(rational_to_f64(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat_int(-7));
        assert_eq!(parse_rational("-0.125").unwrap(), rat(-1, 8));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn huge_rational_to_f64() {
        let big = BigRational::from_integer(num_traits::pow(BigInt::from(10), 400));
        let r = big.clone() / (big * BigInt::from(3));
        assert!((rational_to_f64(&r) - 1.0 / 3.0).abs() < 1e-15);
        let f = BigRational::from_integer(num_traits::pow(BigInt::from(2), 1000));
        assert_eq!(rational_to_f64(&(rat(1, 1) / f)), 2f64.powi(-1000));
    }

    #[test]
    fn format_round_trip() {
        for s in ["15/7", "-33/10", "4", "0"] {
            assert_eq!(format_rational(&parse_rational(s).unwrap()), s);
        }
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333");
    }
}
