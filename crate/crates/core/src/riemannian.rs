//! Third-order jets of metrics on `R^3` and the nondegeneracy condition on
//! `g_33` that gives the distance phase contact order four.
//!
//! Indices `i, j` are 1-based, matching the usual `g_ij` notation.

use std::collections::BTreeMap;

use num_traits::Signed;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{LinAlg, Mat};
use crate::rng::{dyadic, trial_rng};
use crate::scalar::{Rational, Scalar};

/// Tolerance for the float verdict of [`contact4_condition`].
pub const METRIC_TOL: f64 = 1e-12;

/// Taylor coefficients `g_{ij,α}` of a symmetric metric at the origin, for
/// `i <= j` and `|α| <= 3`. Absent coefficients are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricJet3<S: Scalar> {
    coeffs: BTreeMap<(usize, usize, [u32; 3]), S>,
}

pub type ExactMetric = MetricJet3<Rational>;

impl<S: LinAlg> MetricJet3<S> {
    /// Builds a jet from `(i, j, α, coefficient)` entries; `(j, i)` is folded
    /// onto `(i, j)` and repeated entries add up. Fails on indices outside
    /// `1..=3`, orders above three, or a non positive-definite `g(0)`.
    pub fn new(entries: impl IntoIterator<Item = (usize, usize, [u32; 3], S)>) -> Result<Self> {
        let mut coeffs: BTreeMap<(usize, usize, [u32; 3]), S> = BTreeMap::new();
        for (i, j, a, c) in entries {
            if !(1..=3).contains(&i) || !(1..=3).contains(&j) {
                return Err(Error::InvalidParameter(format!("metric index ({i}, {j}) outside 1..=3")));
            }
            if a.iter().sum::<u32>() > 3 {
                return Err(Error::InvalidParameter(format!("metric jet order {:?} exceeds 3", a)));
            }
            let key = (i.min(j), i.max(j), a);
            let v = coeffs.remove(&key).map_or(c.clone(), |old| old + c);
            if !v.is_zero() {
                coeffs.insert(key, v);
            }
        }
        let jet = Self { coeffs };
        if !jet.leading_is_positive_definite() {
            return Err(Error::InvalidParameter("g(0) is not positive definite".into()));
        }
        Ok(jet)
    }

    /// The Euclidean metric.
    pub fn flat() -> Self {
        Self::new((1..=3).map(|i| (i, i, [0, 0, 0], S::one()))).expect("identity is positive definite")
    }

    pub fn coeff(&self, i: usize, j: usize, a: [u32; 3]) -> S {
        self.coeffs.get(&(i.min(j), i.max(j), a)).cloned().unwrap_or_else(S::zero)
    }

    /// Nonzero entries `((i, j, α), c)` with `i <= j`.
    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize, [u32; 3]), &S)> {
        self.coeffs.iter()
    }

    /// `∂^α g_ij (0) = α! * coefficient`.
    pub fn partial(&self, i: usize, j: usize, a: [u32; 3]) -> S {
        let fact: u64 = a.iter().map(|&k| (1..=k as u64).product::<u64>()).product();
        self.coeff(i, j, a) * S::from_int(fact as i64)
    }

    pub fn leading(&self) -> Mat<S> {
        Mat::from_fn(3, 3, |i, j| self.coeff(i + 1, j + 1, [0, 0, 0]))
    }

    /// Sylvester's criterion on `g(0)`.
    fn leading_is_positive_definite(&self) -> bool {
        let g = self.leading();
        (1..=3).all(|k| {
            let idx: Vec<usize> = (0..k).collect();
            S::det(&g.sub_matrix(&idx, &idx)).is_positive()
        })
    }

    /// The jet with `delta` added to the coefficient of `x^α` in `g_ij`.
    pub fn perturbed(&self, i: usize, j: usize, a: [u32; 3], delta: S) -> Result<Self> {
        let entries = self
            .coeffs
            .iter()
            .map(|(&(p, q, b), c)| (p, q, b, c.clone()))
            .chain(std::iter::once((i, j, a, delta)));
        Self::new(entries)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contact4<S> {
    /// `(g_33,11 - g_33,22) g_33,123 - (g_33,113 - g_33,223) g_33,12`
    pub value: S,
    pub nonzero: bool,
}

/// Evaluates the cubic-jet condition on `g_33` at the origin. Exact values
/// are tested against zero; float values against [`METRIC_TOL`] relative to
/// the size of the two products.
pub fn contact4_condition<S: LinAlg>(m: &MetricJet3<S>) -> Contact4<S> {
    let d = |a: [u32; 3]| m.partial(3, 3, a);
    let first = (d([2, 0, 0]) - d([0, 2, 0])) * d([1, 1, 1]);
    let second = (d([2, 0, 1]) - d([0, 2, 1])) * d([1, 1, 0]);
    let scale = first.to_f64_lossy().abs().max(second.to_f64_lossy().abs()).max(1.0);
    let value = first - second;
    let nonzero = !value.is_negligible(scale, METRIC_TOL);
    Contact4 { value, nonzero }
}

/// Multi-indices with `1 <= |α| <= 3` in graded lexicographic order.
pub fn jet_monomials() -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for deg in 1..=3u32 {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                out.push([a, b, deg - a - b]);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSweepReport {
    pub trials: usize,
    pub successes: usize,
    /// Per-trial verdicts, in trial order.
    pub outcomes: Vec<bool>,
}

impl MetricSweepReport {
    pub fn fraction(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }
}

/// Adds a dyadic rational in `[-magnitude, magnitude]` to every coefficient
/// of `g_33` of order one to three; `g(0)` is left alone so the metric stays
/// positive definite. Trial `k` draws from stream `k` of `seed`.
pub fn metric_genericity_sweep<S: LinAlg>(
    base: &MetricJet3<S>,
    magnitude: &Rational,
    trials: usize,
    seed: u64,
) -> Result<MetricSweepReport> {
    if magnitude.is_negative() {
        return Err(Error::InvalidParameter("magnitude must be nonnegative".into()));
    }
    let monomials = jet_monomials();
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k as u64);
            let mut m = base.clone();
            for &a in &monomials {
                let delta = dyadic(&mut rng, magnitude);
                m = m.perturbed(3, 3, a, S::from_rational(&delta))?;
            }
            Ok(contact4_condition(&m).nonzero)
        })
        .collect::<Result<Vec<bool>>>()?;
    let successes = outcomes.iter().filter(|&&b| b).count();
    Ok(MetricSweepReport { trials, successes, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int};

    fn worked() -> ExactMetric {
        // g_33 = 1 + x1^2 + x1 x2 x3
        ExactMetric::flat().perturbed(3, 3, [2, 0, 0], rat_int(1)).unwrap().perturbed(3, 3, [1, 1, 1], rat_int(1)).unwrap()
    }

    #[test]
    fn flat_and_worked_values() {
        let flat = contact4_condition(&ExactMetric::flat());
        assert_eq!(flat.value, rat_int(0));
        assert!(!flat.nonzero);
        let c = contact4_condition(&worked());
        assert_eq!(c.value, rat_int(2));
        assert!(c.nonzero);
    }

    #[test]
    fn partials_use_factorials() {
        let m = ExactMetric::flat().perturbed(3, 3, [3, 0, 0], rat(1, 2)).unwrap();
        assert_eq!(m.partial(3, 3, [3, 0, 0]), rat_int(3));
        assert_eq!(m.partial(3, 3, [0, 0, 0]), rat_int(1));
    }

    #[test]
    fn parity_kills_condition() {
        // g_33 even in (x1, x2) without an x1 x2 x3 term.
        let m = ExactMetric::flat()
            .perturbed(3, 3, [2, 0, 0], rat_int(3))
            .unwrap()
            .perturbed(3, 3, [0, 2, 1], rat_int(5))
            .unwrap()
            .perturbed(3, 3, [0, 0, 3], rat_int(7))
            .unwrap()
            .perturbed(3, 3, [2, 0, 1], rat(1, 3))
            .unwrap();
        assert_eq!(contact4_condition(&m).value, rat_int(0));
    }

    #[test]
    fn cubic_scaling_is_linear() {
        let base = worked().perturbed(3, 3, [1, 1, 0], rat_int(2)).unwrap();
        let v = |s: i64| {
            let mut m = base.clone();
            for a in jet_monomials().into_iter().filter(|a| a.iter().sum::<u32>() == 3) {
                let c = m.coeff(3, 3, a);
                m = m.perturbed(3, 3, a, c * rat_int(s - 1)).unwrap();
            }
            m.partial(3, 3, [1, 1, 1])
        };
        for s in [1, 2, 3] {
            assert_eq!(v(s), rat_int(s));
        }
    }

    #[test]
    fn malformed_jets() {
        assert!(ExactMetric::new([(1, 4, [0, 0, 0], rat_int(1))]).is_err());
        assert!(ExactMetric::new([(1, 1, [2, 2, 0], rat_int(1))]).is_err());
        assert!(ExactMetric::new([(1, 1, [0, 0, 0], rat_int(1)), (2, 2, [0, 0, 0], rat_int(1))]).is_err());
        let skew = ExactMetric::new((1..=3).map(|i| (i, i, [0, 0, 0], rat_int(1))).chain([(1, 2, [0, 0, 0], rat_int(2))]));
        assert!(skew.is_err());
        let sym = ExactMetric::flat().perturbed(2, 1, [1, 0, 0], rat_int(1)).unwrap();
        assert_eq!(sym.coeff(1, 2, [1, 0, 0]), rat_int(1));
    }

    #[test]
    fn sweeps() {
        let flat = ExactMetric::flat();
        let r = metric_genericity_sweep(&flat, &rat(1, 16), 50, 7).unwrap();
        assert!(r.fraction().unwrap() >= 0.95);
        assert_eq!(metric_genericity_sweep(&flat, &rat_int(0), 10, 7).unwrap().fraction(), Some(0.0));
        assert_eq!(metric_genericity_sweep(&flat, &rat(1, 16), 0, 7).unwrap().fraction(), None);
    }

    #[test]
    fn float_agrees_with_exact() {
        let exact = metric_genericity_sweep(&ExactMetric::flat(), &rat(1, 8), 40, 3).unwrap();
        let float = metric_genericity_sweep(&MetricJet3::<f64>::flat(), &rat(1, 8), 40, 3).unwrap();
        assert_eq!(exact.outcomes, float.outcomes);
        let e = contact4_condition(&worked()).value;
        let f = contact4_condition(&MetricJet3::<f64>::flat().perturbed(3, 3, [2, 0, 0], 1.0).unwrap().perturbed(3, 3, [1, 1, 1], 1.0).unwrap());
        assert!((f.value - crate::scalar::rational_to_f64(&e)).abs() <= 1e-12 * 2.0);
    }
}
