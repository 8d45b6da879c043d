//! The contact matrix and the contact order of a phase.
//!
//! Row `label` of the matrix holds `h! * [t^h]` of the labelled product of
//! Hessian entries `D_ij(t)` for `h = 1..=l`; the last row does the same for
//! `det D(t)`. A phase has contact order `<= l` when the first `l` columns
//! have full row rank.

use rayon::prelude::*;

use crate::combinatorics::{contact_labels, RowLabel};
use crate::error::{Error, Result};
use crate::jet::{Jet, MultiIndex};
use crate::linalg::{LinAlg, Mat, RankInfo};
use crate::phase::{gauss_map, hessian_along_curve, HessianCurve, Phase};
use crate::rng::{dyadic, trial_rng};
use crate::scalar::{Rational, Scalar};

/// Default relative singular-value cutoff for float ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ContactMatrix<S: Scalar> {
    pub n: usize,
    pub l: u32,
    pub labels: Vec<RowLabel>,
    /// `rows[r][h - 1]` is the `h`-th derivative at zero.
    pub rows: Vec<Vec<S>>,
}

impl<S: Scalar> ContactMatrix<S> {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, label: &RowLabel) -> Option<&[S]> {
        self.labels.iter().position(|l| l == label).map(|i| self.rows[i].as_slice())
    }

    pub fn det_row(&self) -> &[S] {
        self.rows.last().expect("contact matrix has a det row")
    }

    pub fn to_mat(&self) -> Mat<S> {
        Mat::from_rows(self.rows.clone())
    }

    /// Rows restricted to the first `l` columns, each column divided by
    /// `h!`. Rank is unchanged by the column scaling, and the raw Taylor
    /// coefficients are far better conditioned in floating point.
    fn coefficient_mat(&self, l: u32) -> Mat<S> {
        let fact: Vec<S> = (1..=l as i64)
            .scan(S::one(), |acc, h| {
                *acc = acc.clone() * S::from_int(h);
                Some(acc.clone())
            })
            .collect();
        Mat::from_fn(self.rows.len(), l as usize, |r, c| self.rows[r][c].clone() / fact[c].clone())
    }
}

/// `h!` times the `t^h` coefficient, `h = 1..=l`.
fn derivative_row<S: Scalar>(jet: &Jet<S>, l: u32) -> Vec<S> {
    let mut fact = S::one();
    (1..=l)
        .map(|h| {
            fact = fact.clone() * S::from_int(h as i64);
            jet.univariate_coeff(h) * fact.clone()
        })
        .collect()
}

fn build_unchecked<S: Scalar>(hc: &HessianCurve<S>, l: u32) -> Result<ContactMatrix<S>> {
    if hc.order() < l {
        return Err(Error::InsufficientOrder { needed: l, have: hc.order() });
    }
    let labels = contact_labels(hc.n)?;
    let rows = labels
        .iter()
        .map(|label| match label {
            RowLabel::Det => derivative_row(&hc.det_jet, l),
            RowLabel::Product(f) => derivative_row(&hc.product(f), l),
        })
        .collect();
    Ok(ContactMatrix { n: hc.n, l, labels, rows })
}

/// Builds the contact matrix with `l` columns; requires `l >= A(n)`.
pub fn build_contact_matrix<S: Scalar>(hc: &HessianCurve<S>, l: u32) -> Result<ContactMatrix<S>> {
    let a_n = contact_labels(hc.n)?.len();
    if (l as usize) < a_n {
        return Err(Error::InvalidParameter(format!("contact matrix needs l >= A(n) = {a_n}, got {l}")));
    }
    build_unchecked(hc, l)
}

/// Rank of the first `l` columns.
pub fn rank_prefix<S: LinAlg>(cm: &ContactMatrix<S>, l: u32, tol: f64) -> RankInfo {
    S::rank(&cm.coefficient_mat(l.min(cm.l)), tol)
}

pub fn rank<S: LinAlg>(cm: &ContactMatrix<S>, tol: f64) -> RankInfo {
    rank_prefix(cm, cm.l, tol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactReport {
    pub contact_order: Option<u32>,
    pub rank_at_lmax: usize,
    pub sigma_min: Option<f64>,
    pub l_max: u32,
    pub a_n: usize,
}

/// Smallest `l` in `A(n)..=l_max` at which the contact matrix has full row
/// rank.
pub fn contact_order<S: LinAlg>(p: &Phase<S>, point: &[S], l_max: u32, tol: f64) -> Result<ContactReport> {
    let hc = hessian_along_curve(p, point, l_max)?;
    let cm = build_unchecked(&hc, l_max)?;
    let a_n = cm.num_rows();
    let mut contact = None;
    let mut prev = 0;
    for l in (a_n as u32)..=l_max {
        let r = rank_prefix(&cm, l, tol).rank;
        assert!(r >= prev, "rank decreased when adding columns");
        prev = r;
        if r == a_n {
            contact = Some(l);
            break;
        }
    }
    let at_max = rank(&cm, tol);
    Ok(ContactReport {
        contact_order: contact,
        rank_at_lmax: at_max.rank,
        sigma_min: if S::EXACT { None } else { at_max.sigma_min },
        l_max,
        a_n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BourgainReport<S: Scalar> {
    /// Least-squares proportionality constant; `None` when the right-hand
    /// side vanishes.
    pub c: Option<S>,
    pub residual: f64,
    pub holds: bool,
    /// `(G . grad)^2 d_y^2 phi`
    pub lhs: Mat<S>,
    /// `(G . grad) d_y^2 phi`
    pub rhs: Mat<S>,
}

/// Default relative residual tolerance for float backends.
pub const BOURGAIN_TOL: f64 = 1e-9;

/// Tests `(G . grad_{x,t})^2 d^2_{y_i y_j} phi = C (G . grad_{x,t}) d^2_{y_i y_j} phi`
/// at `point`, with `G` the unnormalised Gauss map.
pub fn bourgain_check<S: LinAlg>(p: &Phase<S>, point: &[S]) -> Result<BourgainReport<S>> {
    if p.order() < 4 {
        return Err(Error::InsufficientOrder { needed: 4, have: p.order() });
    }
    let n = p.n();
    let nv = 2 * n - 1;
    let g = gauss_map(p, point)?;
    let local = p.local_jet(point)?;
    let d = |vars: &[usize]| {
        let mut e = vec![0u32; nv];
        for &v in vars {
            e[v] += 1;
        }
        let idx = MultiIndex::new(e);
        local.coeff(&idx) * S::from_rational(&Rational::from_integer(idx.factorial()))
    };
    let m = n - 1;
    let rhs = Mat::from_fn(m, m, |i, j| {
        (0..n).fold(S::zero(), |acc, a| acc + g[a].clone() * d(&[a, n + i, n + j]))
    });
    let lhs = Mat::from_fn(m, m, |i, j| {
        let mut acc = S::zero();
        for a in 0..n {
            for b in 0..n {
                acc = acc + g[a].clone() * g[b].clone() * d(&[a, b, n + i, n + j]);
            }
        }
        acc
    });
    let dot = |x: &Mat<S>, y: &Mat<S>| {
        let mut acc = S::zero();
        for i in 0..m {
            for j in 0..m {
                acc = acc + x[(i, j)].clone() * y[(i, j)].clone();
            }
        }
        acc
    };
    let rr = dot(&rhs, &rhs);
    let ll = dot(&lhs, &lhs);
    let scale = rhs.max_abs().max(lhs.max_abs()).max(f64::MIN_POSITIVE);
    if rr.is_negligible(scale * scale, BOURGAIN_TOL) {
        let vacuous = ll.is_negligible(scale * scale, BOURGAIN_TOL);
        return Ok(BourgainReport { c: None, residual: if vacuous { 0.0 } else { 1.0 }, holds: vacuous, lhs, rhs });
    }
    let c = dot(&lhs, &rhs) / rr;
    let diff = Mat::from_fn(m, m, |i, j| lhs[(i, j)].clone() - c.clone() * rhs[(i, j)].clone());
    let dd = dot(&diff, &diff);
    let norm = ll.to_f64_lossy().sqrt().max(f64::MIN_POSITIVE);
    let residual = if dd.is_zero() { 0.0 } else { dd.to_f64_lossy().sqrt() / norm };
    let holds = if S::EXACT { dd.is_zero() } else { residual <= BOURGAIN_TOL };
    Ok(BourgainReport { c: Some(c), residual, holds, lhs, rhs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenericityReport {
    pub trials: usize,
    pub successes: usize,
    /// Per-trial contact orders, in trial order.
    pub outcomes: Vec<Option<u32>>,
}

impl GenericityReport {
    pub fn fraction(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }
}

/// Random perturbation `sum c_{a,beta} t^a y^beta` with `0 <= a <= degree`
/// and `2 <= |beta| <= 3`, coefficients dyadic in `[-magnitude, magnitude]`.
pub fn random_perturbation(
    n: usize,
    order: u32,
    degree: u32,
    magnitude: &Rational,
    rng: &mut impl rand::Rng,
) -> Jet<Rational> {
    let nv = 2 * n - 1;
    let mut jet = Jet::zero(nv, order);
    for beta in y_multi_indices(n - 1, 2, 3) {
        for a in 0..=degree {
            let c = dyadic(rng, magnitude);
            let mut e = vec![0u32; nv];
            e[n - 1] = a;
            for (j, &bj) in beta.iter().enumerate() {
                e[n + j] = bj;
            }
            jet.insert(MultiIndex::new(e), c);
        }
    }
    jet.truncate(order)
}

fn y_multi_indices(m: usize, lo: u32, hi: u32) -> Vec<Vec<u32>> {
    fn go(m: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == m - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            go(m, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for d in lo..=hi {
        go(m, d, &mut Vec::new(), &mut out);
    }
    out
}

/// Fraction of seeded random perturbations of `base` that reach contact
/// order `A(n)` with `l_max = A(n)`.
pub fn genericity_sweep<S: LinAlg>(
    base: &Phase<S>,
    degree: u32,
    magnitude: &Rational,
    trials: usize,
    seed: u64,
) -> Result<GenericityReport> {
    let a_n = contact_labels(base.n())?.len() as u32;
    if base.order() < a_n + 2 {
        return Err(Error::InsufficientOrder { needed: a_n + 2, have: base.order() });
    }
    let point = base.origin_point();
    let outcomes: Vec<Option<u32>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let pert = random_perturbation(base.n(), base.order(), degree, magnitude, &mut rng);
            let pert = pert.map_coeffs(S::from_rational);
            let phase = base.perturbed(&pert)?;
            Ok(contact_order(&phase, &point, a_n, DEFAULT_RANK_TOL)?.contact_order)
        })
        .collect::<Result<_>>()?;
    let successes = outcomes.iter().filter(|o| o.is_some()).count();
    Ok(GenericityReport { trials, successes, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int};

    pub(crate) fn q_term(order: u32) -> Phase<Rational> {
        let e = |t: u32, y1: u32, y2: u32| vec![0, 0, t, y1, y2];
        Phase::x_dot_y_plus(
            3,
            order,
            &[
                (e(1, 2, 0), rat_int(1)),
                (e(1, 0, 2), rat_int(1)),
                (e(2, 2, 0), rat_int(1)),
                (e(3, 1, 1), rat_int(1)),
                (e(4, 0, 2), rat_int(1)),
            ],
        )
        .unwrap()
    }

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| rat_int(x)).collect()
    }

    #[test]
    fn standard_matrix() {
        let p = Phase::<Rational>::standard(3, 6).unwrap();
        let hc = hessian_along_curve(&p, &p.origin_point(), 4).unwrap();
        let cm = build_contact_matrix(&hc, 4).unwrap();
        assert_eq!(cm.rows, vec![ints(&[2, 0, 0, 0]), ints(&[0, 0, 0, 0]), ints(&[2, 0, 0, 0]), ints(&[0, 8, 0, 0])]);
        assert_eq!(rank(&cm, DEFAULT_RANK_TOL).rank, 2);
        assert!(build_contact_matrix(&hc, 3).is_err());
    }

    #[test]
    fn q_term_matrix_and_order() {
        let p = q_term(6);
        let hc = hessian_along_curve(&p, &p.origin_point(), 4).unwrap();
        let cm = build_contact_matrix(&hc, 4).unwrap();
        assert_eq!(
            cm.rows,
            vec![ints(&[2, 4, 0, 0]), ints(&[0, 0, 6, 0]), ints(&[2, 0, 0, 48]), ints(&[0, 8, 24, 0])]
        );
        assert_eq!(Rational::det(&cm.to_mat()), rat_int(4608));
        let r = contact_order(&p, &p.origin_point(), 4, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.contact_order, Some(4));
        assert_eq!(r.rank_at_lmax, 4);
    }

    #[test]
    fn float_rank_agrees() {
        let p = q_term(8);
        let pf = Phase::at_origin(3, p.jet().to_float()).unwrap();
        let r = contact_order(&pf, &pf.origin_point(), 6, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.contact_order, Some(4));
        assert!(r.sigma_min.unwrap() > 0.0);
    }

    #[test]
    fn standard_has_no_contact_order() {
        let p = Phase::<Rational>::standard(3, 10).unwrap();
        let r = contact_order(&p, &p.origin_point(), 8, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.contact_order, None);
        assert!(r.rank_at_lmax <= 2);
    }

    #[test]
    fn bourgain_examples() {
        let p = Phase::<Rational>::standard(3, 4).unwrap();
        let b = bourgain_check(&p, &p.origin_point()).unwrap();
        assert!(b.holds);
        assert_eq!(b.c, Some(rat_int(0)));

        let b = bourgain_check(&q_term(6), &q_term(6).origin_point()).unwrap();
        assert!(!b.holds);
        assert!(b.residual > 0.0);

        // x.y + (t + alpha t^2)(y1^2 + y1 y2 + 3 y2^2)
        let alpha = rat(3, 7);
        let e = |t: u32, y1: u32, y2: u32| vec![0, 0, t, y1, y2];
        let h = [((2, 0), 1), ((1, 1), 1), ((0, 2), 3)];
        let mut extra = Vec::new();
        for ((a, b), c) in h {
            extra.push((e(1, a, b), rat_int(c)));
            extra.push((e(2, a, b), alpha.clone() * rat_int(c)));
        }
        let p = Phase::x_dot_y_plus(3, 5, &extra).unwrap();
        let b = bourgain_check(&p, &p.origin_point()).unwrap();
        assert!(b.holds);
        assert_eq!(b.c, Some(rat_int(2) * alpha));
    }

    #[test]
    fn sweep_edge_cases() {
        let p = Phase::<Rational>::standard(3, 7).unwrap();
        let r = genericity_sweep(&p, 4, &rat_int(0), 5, 1).unwrap();
        assert_eq!(r.successes, 0);
        let r = genericity_sweep(&p, 4, &rat(1, 8), 0, 1).unwrap();
        assert_eq!(r.fraction(), None);
        let a = genericity_sweep(&p, 4, &rat(1, 8), 6, 9).unwrap();
        let b = genericity_sweep(&p, 4, &rat(1, 8), 6, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn y_indices() {
        assert_eq!(y_multi_indices(2, 2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(y_multi_indices(2, 2, 3).len(), 7);
    }
}
