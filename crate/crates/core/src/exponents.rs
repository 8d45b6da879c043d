//! Exponent and dimension formulas, all in exact rational arithmetic.
//!
//! `l` is a contact order and `L = l + 2 - n` appears throughout. The
//! `l`-dependent formulas are stated for odd `n` only and reject even `n`.

use std::collections::BTreeMap;

use num_integer::Integer;
use num_traits::{One, Signed};

use crate::combinatorics::a_n_closed;
use crate::error::{Error, Result};
use crate::scalar::{rat_int, Rational};

fn r(v: i64) -> Rational {
    rat_int(v)
}

fn require_odd(n: usize) -> Result<()> {
    if n < 3 || n.is_even() {
        return Err(Error::InvalidParameter(format!("formula requires odd n >= 3, got {n}")));
    }
    Ok(())
}

fn positive_ratio(num: Rational, den: Rational, what: &str) -> Result<Rational> {
    if !den.is_positive() {
        return Err(Error::InvalidParameter(format!("{what}: denominator {den} is not positive")));
    }
    Ok(num / den)
}

/// `L = l + 2 - n`.
fn big_l(n: usize, l: u32) -> Rational {
    r(l as i64 + 2 - n as i64)
}

pub fn zeta_nl(n: usize, l: u32) -> Result<Rational> {
    require_odd(n)?;
    let c = r(3 * n as i64 - 3);
    let den = c.clone() * c.clone() * big_l(n, l) + r(2) * c;
    positive_ratio(r(4), den, "zeta(n, l)")
}

/// `2(3n+1)/(3n-3) - zeta(n, l)`.
pub fn p_osc(n: usize, l: u32) -> Result<Rational> {
    Ok(p_ghi_odd(n) - zeta_nl(n, l)?)
}

pub fn p_ghi_odd(n: usize) -> Rational {
    let n = n as i64;
    Rational::new((2 * (3 * n + 1)).into(), (3 * n - 3).into())
}

pub fn p_ghi_even(n: usize) -> Rational {
    let n = n as i64;
    Rational::new((2 * (3 * n + 2)).into(), (3 * n - 2).into())
}

/// Parity-dependent oscillatory-integral exponent.
pub fn p_ghi(n: usize) -> Result<Rational> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("p(n) requires n >= 3, got {n}")));
    }
    Ok(if n.is_odd() { p_ghi_odd(n) } else { p_ghi_even(n) })
}

/// `(n+1)/2 + (n-1)/(2 L (n-1) + 2)`.
pub fn kakeya_dim(n: usize, l: u32) -> Result<Rational> {
    require_odd(n)?;
    let m = r(n as i64 - 1);
    let gain = positive_ratio(m.clone(), r(2) * big_l(n, l) * m + r(2), "kakeya_dim")?;
    Ok(Rational::new((n as i64 + 1).into(), 2.into()) + gain)
}

/// `(n+1)/2 + (n-1)/(4 L (n-1) + 2)`.
pub fn kakeya_dim_posdef(n: usize, l: u32) -> Result<Rational> {
    require_odd(n)?;
    let m = r(n as i64 - 1);
    let gain = positive_ratio(m.clone(), r(4) * big_l(n, l) * m + r(2), "kakeya_dim_posdef")?;
    Ok(Rational::new((n as i64 + 1).into(), 2.into()) + gain)
}

/// `(L(n-1)(n+1) + 2n) / (L(n-1)^2 + 2(n-1))`.
pub fn maximal_p(n: usize, l: u32) -> Result<Rational> {
    require_odd(n)?;
    let m = r(n as i64 - 1);
    let ll = big_l(n, l);
    let num = ll.clone() * m.clone() * r(n as i64 + 1) + r(2 * n as i64);
    let den = ll * m.clone() * m.clone() + r(2) * m;
    positive_ratio(num, den, "maximal_p")
}

pub fn dual(p: &Rational) -> Result<Rational> {
    if p <= &Rational::one() {
        return Err(Error::InvalidParameter(format!("dual exponent needs p > 1, got {p}")));
    }
    Ok(p / (p - Rational::one()))
}

/// `(L(n-1)k + n) / (L(n-1)(k-1) + n - 1)`.
pub fn broad_p(n: usize, k: usize, l: u32) -> Result<Rational> {
    require_odd(n)?;
    if k < 2 || k > n {
        return Err(Error::InvalidParameter(format!("broad_p requires 2 <= k <= n, got k = {k}")));
    }
    let m = r(n as i64 - 1);
    let ll = big_l(n, l);
    let num = ll.clone() * m.clone() * r(k as i64) + r(n as i64);
    let den = ll * m.clone() * r(k as i64 - 1) + m;
    positive_ratio(num, den, "broad_p")
}

fn unit_interval(g: Rational, what: &str) -> Result<Rational> {
    if g.is_negative() || g > Rational::one() {
        return Err(Error::InvalidParameter(format!("{what} = {g} lies outside [0, 1]")));
    }
    Ok(g)
}

/// `((3n-3)(l-n+2) + 2) / (4(l-n+2)(n-1) + 2)`.
pub fn gamma_osc(n: usize, l: u32) -> Result<Rational> {
    require_odd(n)?;
    let ll = big_l(n, l);
    let num = r(3 * n as i64 - 3) * ll.clone() + r(2);
    let den = r(4) * ll * r(n as i64 - 1) + r(2);
    unit_interval(positive_ratio(num, den, "gamma_osc")?, "gamma_osc")
}

/// `(n-m) L / ((n-1) L + 1)`.
pub fn gamma_kakeya(n: usize, m: &Rational, l: u32) -> Result<Rational> {
    require_odd(n)?;
    let ll = big_l(n, l);
    let num = (r(n as i64) - m) * ll.clone();
    let den = r(n as i64 - 1) * ll + r(1);
    unit_interval(positive_ratio(num, den, "gamma_kakeya")?, "gamma_kakeya")
}

/// `2(2n-k+2)/(2n-k)`.
pub fn p_range(n: usize, k: usize) -> Result<Rational> {
    let d = 2 * n as i64 - k as i64;
    positive_ratio(r(2 * (d + 2)), r(d), "p range")
}

/// `2(k-1)/(k-2)`.
pub fn q_range(k: usize) -> Result<Rational> {
    positive_ratio(r(2 * (k as i64 - 1)), r(k as i64 - 2), "q range")
}

/// `A(n)` as used by the constants `zeta_n` and `d_n`.
fn a_n_u32(n: usize) -> Result<u32> {
    let a = a_n_closed(n)?;
    u32::try_from(&a).map_err(|_| Error::InvalidParameter(format!("A({n}) too large")))
}

pub fn zeta_n(n: usize) -> Result<Rational> {
    zeta_nl(n, a_n_u32(n)?)
}

/// `(n-1) / (2 (A(n) + 2 - n)(n-1) + 2)`.
pub fn d_n(n: usize) -> Result<Rational> {
    Ok(kakeya_dim(n, a_n_u32(n)?)? - Rational::new((n as i64 + 1).into(), 2.into()))
}

pub fn default_k(n: usize) -> usize {
    (n + 2) / 2
}

pub fn default_m(n: usize) -> Rational {
    Rational::new((n as i64 + 1).into(), 2.into())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExponentReport {
    pub n: usize,
    pub l: u32,
    pub k: usize,
    pub m: Rational,
    pub values: BTreeMap<String, Rational>,
}

/// Every formula at `(n, l, k, m)`. Even `n` yields only the
/// `l`-independent values.
pub fn exponent_report(n: usize, l: u32, k: Option<usize>, m: Option<Rational>) -> Result<ExponentReport> {
    let k = k.unwrap_or_else(|| default_k(n));
    let m = m.unwrap_or_else(|| default_m(n));
    let mut values = BTreeMap::new();
    values.insert("p_ghi_odd".to_string(), p_ghi_odd(n));
    values.insert("p_ghi_even".to_string(), p_ghi_even(n));
    values.insert("p_ghi".to_string(), p_ghi(n)?);
    if n.is_odd() {
        values.insert("zeta_nl".into(), zeta_nl(n, l)?);
        values.insert("p_osc".into(), p_osc(n, l)?);
        values.insert("kakeya_dim".into(), kakeya_dim(n, l)?);
        values.insert("kakeya_dim_posdef".into(), kakeya_dim_posdef(n, l)?);
        let mp = maximal_p(n, l)?;
        values.insert("maximal_p_dual".into(), dual(&mp)?);
        values.insert("maximal_p".into(), mp);
        values.insert("broad_p".into(), broad_p(n, k, l)?);
        values.insert("gamma_osc".into(), gamma_osc(n, l)?);
        values.insert("gamma_kakeya".into(), gamma_kakeya(n, &m, l)?);
        if n <= 15 {
            values.insert("zeta_n".into(), zeta_n(n)?);
            values.insert("d_n".into(), d_n(n)?);
        }
    }
    if let Ok(v) = p_range(n, k) {
        values.insert("p_range".into(), v);
    }
    if let Ok(v) = q_range(k) {
        values.insert("q_range".into(), v);
    }
    Ok(ExponentReport { n, l, k, m, values })
}

/// `k / (k - 1)`, the large-`l` limit of [`broad_p`].
pub fn broad_p_limit(k: usize) -> Result<Rational> {
    if k < 2 {
        return Err(Error::InvalidParameter("k must be >= 2".into()));
    }
    Ok(Rational::new((k as i64).into(), (k as i64 - 1).into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn fixtures() {
        assert_eq!(kakeya_dim(3, 4).unwrap(), rat(15, 7));
        assert_eq!(kakeya_dim(3, 2).unwrap(), rat(7, 3));
        assert_eq!(kakeya_dim_posdef(3, 4).unwrap(), rat(27, 13));
        // L = l + 2 - n = 1 here, so the gain is 2/10.
        assert_eq!(kakeya_dim_posdef(3, 2).unwrap(), rat(11, 5));
        assert_eq!(zeta_nl(3, 4).unwrap(), rat(1, 30));
        assert_eq!(p_osc(3, 4).unwrap(), rat(33, 10));
        assert_eq!(p_ghi(3).unwrap(), rat(10, 3));
        assert_eq!(p_ghi(4).unwrap(), rat(14, 5));
        assert_eq!(p_ghi(5).unwrap(), rat(8, 3));
        assert_eq!(maximal_p(3, 4).unwrap(), rat(15, 8));
        assert_eq!(dual(&maximal_p(3, 4).unwrap()).unwrap(), rat(15, 7));
        assert_eq!(maximal_p(3, 2).unwrap(), rat(7, 4));
        assert_eq!(broad_p(3, 2, 4).unwrap(), rat(15, 8));
        assert_eq!(gamma_osc(3, 4).unwrap(), rat(10, 13));
        assert_eq!(gamma_kakeya(3, &rat(2, 1), 4).unwrap(), rat(3, 7));
        assert_eq!(d_n(3).unwrap(), rat(1, 7));
        assert_eq!(zeta_n(3).unwrap(), rat(1, 30));
    }

    #[test]
    fn zeta_closed_form_n3() {
        for l in 2..20 {
            assert_eq!(zeta_nl(3, l).unwrap(), rat(4, 36 * l as i64 - 24));
        }
    }

    #[test]
    fn even_n_rejected() {
        assert!(kakeya_dim(4, 19).is_err());
        assert!(maximal_p(4, 19).is_err());
        let rep = exponent_report(4, 19, None, None).unwrap();
        assert!(rep.values.contains_key("p_ghi"));
        assert!(!rep.values.contains_key("kakeya_dim"));
    }

    #[test]
    fn broad_matches_maximal_at_default_k() {
        for n in [3, 5, 7] {
            for l in (n as u32 - 1)..30 {
                assert_eq!(broad_p(n, default_k(n), l).unwrap(), maximal_p(n, l).unwrap());
            }
        }
    }

    #[test]
    fn range_helpers() {
        assert_eq!(p_range(3, 2).unwrap(), rat(3, 1));
        assert!(q_range(2).is_err());
        assert_eq!(q_range(3).unwrap(), rat(4, 1));
        assert_eq!(broad_p_limit(2).unwrap(), rat(2, 1));
    }

    #[test]
    fn report_defaults() {
        let rep = exponent_report(3, 4, None, None).unwrap();
        assert_eq!(rep.k, 2);
        assert_eq!(rep.m, rat(2, 1));
        assert_eq!(rep.values["kakeya_dim"], rat(15, 7));
        assert_eq!(rep.values["maximal_p_dual"], rat(15, 7));
    }
}
