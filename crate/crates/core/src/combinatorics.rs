//! Row counting for the contact matrix.
//!
//! The rows of the contact matrix are indexed by canonical products of
//! entries of a symmetric `(n-1) x (n-1)` matrix `D`: every monomial that
//! occurs in some `k x k` minor determinant (`1 <= k <= n-2`), with
//! symmetric duplicates removed, plus one row for `det D` itself.
//!
//! Two independent counts are provided: the closed form [`a_n_closed`]
//! built from involution numbers, and [`a_n_bruteforce`], which enumerates
//! the canonical labels directly. They agree for `n = 3, 4` and differ from
//! `n = 5` on, because the closed form sums per-minor term counts without
//! removing monomials shared between different minors (and its `p(k, i)`
//! term overcounts once `i >= 4`). [`a_n_minor_sum`] reproduces the quantity
//! the closed form actually counts.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Label of a contact-matrix row.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowLabel {
    /// Product of `k` entries `D_{i j}`; pairs stored with `i <= j` and the
    /// list sorted. Indices are zero-based.
    Product(Vec<(usize, usize)>),
    /// The full determinant.
    Det,
}

impl RowLabel {
    /// Canonical product label; `None` if no orientation of the factors
    /// uses pairwise distinct rows and pairwise distinct columns.
    pub fn product(factors: &[(usize, usize)]) -> Option<Self> {
        let mut f: Vec<(usize, usize)> = factors.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
        f.sort_unstable();
        if f.is_empty() || !orientation_feasible(&f) {
            return None;
        }
        Some(RowLabel::Product(f))
    }

    pub fn degree(&self, n: usize) -> usize {
        match self {
            RowLabel::Product(f) => f.len(),
            RowLabel::Det => n - 1,
        }
    }

    pub fn factors(&self) -> &[(usize, usize)] {
        match self {
            RowLabel::Product(f) => f,
            RowLabel::Det => &[],
        }
    }

    /// Applies an index relabeling and re-canonicalises.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        match self {
            RowLabel::Det => RowLabel::Det,
            RowLabel::Product(f) => {
                let mapped: Vec<(usize, usize)> = f.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
                RowLabel::product(&mapped).expect("relabeling preserves feasibility")
            }
        }
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::Det => write!(f, "det"),
            RowLabel::Product(fs) => {
                for (k, (i, j)) in fs.iter().enumerate() {
                    if k > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "D{}{}", i + 1, j + 1)?;
                }
                Ok(())
            }
        }
    }
}

/// Searches the `2^k` orientation choices for one with distinct row
/// indices and distinct column indices.
fn orientation_feasible(factors: &[(usize, usize)]) -> bool {
    fn go(factors: &[(usize, usize)], rows: &mut Vec<usize>, cols: &mut Vec<usize>) -> bool {
        let Some((&(i, j), rest)) = factors.split_first() else {
            return true;
        };
        let mut choices = vec![(i, j)];
        if i != j {
            choices.push((j, i));
        }
        for (r, c) in choices {
            if rows.contains(&r) || cols.contains(&c) {
                continue;
            }
            rows.push(r);
            cols.push(c);
            let ok = go(rest, rows, cols);
            rows.pop();
            cols.pop();
            if ok {
                return true;
            }
        }
        false
    }
    go(factors, &mut Vec::new(), &mut Vec::new())
}

/// Number of involutions in `S(k)`.
pub fn involutions(k: usize) -> BigUint {
    let (mut prev, mut cur) = (BigUint::one(), BigUint::one());
    for j in 2..=k {
        let next = &cur + BigUint::from(j - 1) * &prev;
        prev = cur;
        cur = next;
    }
    cur
}

pub fn factorial(k: usize) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, v| acc * BigUint::from(v))
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `q(k) = (k! + I(k)) / 2`, distinct terms of a symmetric determinant.
pub fn sym_det_terms(k: usize) -> Result<BigUint> {
    if k == 0 {
        return Err(Error::InvalidParameter("q(k) needs k >= 1".into()));
    }
    Ok((factorial(k) + involutions(k)) / BigUint::from(2u8))
}

/// `p(k, i) = k! - (k - i)! (i! - I(i)) / 2`.
pub fn mixed_minor_terms(k: usize, i: usize) -> Result<BigUint> {
    if i >= k {
        return Err(Error::InvalidParameter(format!("p(k, i) needs i < k, got k = {k}, i = {i}")));
    }
    let dup = (factorial(i) - involutions(i)) / BigUint::from(2u8);
    Ok(factorial(k) - factorial(k - i) * dup)
}

/// `#M(n, k, i)`: number of `k`-minors (up to transposition) sharing exactly
/// `i` row/column indices.
pub fn minor_class_count(n: usize, k: usize, i: usize) -> Result<BigUint> {
    if n < 3 || k == 0 || i >= k || k > n - 2 {
        return Err(Error::InvalidParameter(format!("#M(n, k, i) needs 0 <= i <= k-1 <= n-3, got ({n}, {k}, {i})")));
    }
    let m = n - 1;
    let num = binomial(m, i) * binomial(m - i, k - i) * binomial(m - k, k - i);
    let (q, r) = num.div_rem(&BigUint::from(2u8));
    if !r.is_zero() {
        return Err(Error::NonInteger(format!("#M({n}, {k}, {i}) = {num}/2")));
    }
    Ok(q)
}

/// Closed-form row count.
pub fn a_n_closed(n: usize) -> Result<BigUint> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("A(n) needs n >= 3, got {n}")));
    }
    let mut total = BigUint::one();
    for k in 1..=n - 2 {
        total += binomial(n - 1, k) * sym_det_terms(k)?;
        for i in 0..k {
            total += minor_class_count(n, k, i)? * mixed_minor_terms(k, i)?;
        }
    }
    Ok(total)
}

/// Largest `n` accepted by the enumerating counters.
pub const BRUTEFORCE_MAX_N: usize = 8;

/// All canonical product labels of degree `k` (`1 <= k <= n - 2`), sorted.
pub fn row_labels(n: usize, k: usize) -> Result<Vec<RowLabel>> {
    if n < 3 || k == 0 || k > n - 2 {
        return Err(Error::InvalidParameter(format!("row_labels needs 1 <= k <= n-2, got n = {n}, k = {k}")));
    }
    let m = n - 1;
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    let mut usage = vec![0u8; m];
    let mut current = Vec::with_capacity(k);
    enumerate_multisets(&pairs, 0, k, &mut usage, &mut current, &mut out);
    Ok(out)
}

// Generates non-decreasing multisets of pairs; every index can serve at most
// once as a row and once as a column, so usage above two is pruned early.
fn enumerate_multisets(
    pairs: &[(usize, usize)],
    start: usize,
    k: usize,
    usage: &mut [u8],
    current: &mut Vec<(usize, usize)>,
    out: &mut Vec<RowLabel>,
) {
    if current.len() == k {
        if orientation_feasible(current) {
            out.push(RowLabel::Product(current.clone()));
        }
        return;
    }
    for p in start..pairs.len() {
        let (i, j) = pairs[p];
        usage[i] += 1;
        usage[j] += 1;
        if usage[i] <= 2 && usage[j] <= 2 {
            current.push((i, j));
            enumerate_multisets(pairs, p, k, usage, current, out);
            current.pop();
        }
        usage[i] -= 1;
        usage[j] -= 1;
    }
}

/// Row count by direct enumeration of canonical labels.
pub fn a_n_bruteforce(n: usize) -> Result<usize> {
    if !(3..=BRUTEFORCE_MAX_N).contains(&n) {
        return Err(Error::InvalidParameter(format!("a_n_bruteforce supports 3 <= n <= {BRUTEFORCE_MAX_N}, got {n}")));
    }
    let mut total = 1;
    for k in 1..=n - 2 {
        total += row_labels(n, k)?.len();
    }
    Ok(total)
}

/// All labels of the contact matrix in row order: products by degree, then
/// the determinant row.
pub fn contact_labels(n: usize) -> Result<Vec<RowLabel>> {
    if !(3..=BRUTEFORCE_MAX_N).contains(&n) {
        return Err(Error::InvalidParameter(format!("contact matrix supports 3 <= n <= {BRUTEFORCE_MAX_N}, got {n}")));
    }
    let mut labels = Vec::new();
    for k in 1..=n - 2 {
        labels.extend(row_labels(n, k)?);
    }
    labels.push(RowLabel::Det);
    Ok(labels)
}

/// Distinct monomials of the determinant of the minor with rows `rows` and
/// columns `cols` of a symmetric matrix.
pub fn minor_monomials(rows: &[usize], cols: &[usize]) -> BTreeSet<Vec<(usize, usize)>> {
    let mut out = BTreeSet::new();
    let mut perm: Vec<usize> = (0..cols.len()).collect();
    permutations(&mut perm, 0, &mut |p| {
        let mut mono: Vec<(usize, usize)> =
            rows.iter().zip(p).map(|(&r, &c)| (r.min(cols[c]), r.max(cols[c]))).collect();
        mono.sort_unstable();
        out.insert(mono);
    });
    out
}

/// Sum over all `k`-minors (identified up to transposition) of the number of
/// distinct monomials in each, plus one. This is what the closed form counts
/// when its `p(k, i)` term is exact.
pub fn a_n_minor_sum(n: usize) -> Result<usize> {
    if !(3..=7).contains(&n) {
        return Err(Error::InvalidParameter(format!("a_n_minor_sum supports 3 <= n <= 7, got {n}")));
    }
    let m = n - 1;
    let mut total = 1;
    for k in 1..=n - 2 {
        let subsets = k_subsets(m, k);
        for (a, r) in subsets.iter().enumerate() {
            for c in &subsets[a..] {
                total += minor_monomials(r, c).len();
            }
        }
    }
    Ok(total)
}

/// Distinct monomial count of a `k x k` minor with exactly `i` shared
/// indices, by enumeration.
pub fn mixed_minor_terms_bruteforce(k: usize, i: usize) -> Result<usize> {
    if i >= k || k > 7 {
        return Err(Error::InvalidParameter(format!("need i < k <= 7, got k = {k}, i = {i}")));
    }
    let rows: Vec<usize> = (0..k).collect();
    let cols: Vec<usize> = (0..i).chain(k..2 * k - i).collect();
    Ok(minor_monomials(&rows, &cols).len())
}

fn k_subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..m {
            cur.push(v);
            go(v + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, m, k, &mut Vec::new(), &mut out);
    out
}

fn permutations(p: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permutations(p, start + 1, visit);
        p.swap(start, i);
    }
}

/// Small-integer view of a count, for reports.
pub fn to_u64(v: &BigUint) -> Option<u64> {
    v.to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn involution_values() {
        assert_eq!(involutions(0), big(1));
        assert_eq!(involutions(1), big(1));
        assert_eq!(involutions(2), big(2));
        assert_eq!(involutions(4), big(10));
        assert_eq!(involutions(10), big(9496));
    }

    #[test]
    fn q_values() {
        assert_eq!(sym_det_terms(1).unwrap(), big(1));
        assert_eq!(sym_det_terms(2).unwrap(), big(2));
        assert_eq!(sym_det_terms(3).unwrap(), big(5));
        assert!(sym_det_terms(0).is_err());
    }

    #[test]
    fn p_values() {
        for k in 1..6 {
            assert_eq!(mixed_minor_terms(k, 0).unwrap(), factorial(k));
        }
        assert_eq!(mixed_minor_terms(2, 1).unwrap(), big(2));
        // The formula and the enumeration agree on p(3, 2) = 6.
        assert_eq!(mixed_minor_terms(3, 2).unwrap(), big(6));
        assert_eq!(mixed_minor_terms_bruteforce(3, 2).unwrap(), 6);
        assert!(mixed_minor_terms(3, 3).is_err());
    }

    #[test]
    fn p_formula_overcounts_at_k5_i4() {
        assert_eq!(mixed_minor_terms(5, 4).unwrap(), big(113));
        assert_eq!(mixed_minor_terms_bruteforce(5, 4).unwrap(), 109);
        for k in 1..=4 {
            for i in 0..k {
                assert_eq!(
                    mixed_minor_terms(k, i).unwrap(),
                    big(mixed_minor_terms_bruteforce(k, i).unwrap() as u64),
                    "p({k}, {i})"
                );
            }
        }
    }

    #[test]
    fn minor_class_values() {
        assert_eq!(minor_class_count(4, 1, 0).unwrap(), big(3));
        assert_eq!(minor_class_count(4, 2, 1).unwrap(), big(3));
        assert_eq!(minor_class_count(3, 1, 0).unwrap(), big(1));
        assert!(minor_class_count(4, 3, 0).is_err());
    }

    #[test]
    fn closed_form_small_n() {
        assert_eq!(a_n_closed(3).unwrap(), big(4));
        assert_eq!(a_n_closed(4).unwrap(), big(19));
        assert_eq!(a_n_closed(5).unwrap(), big(109));
        assert!(a_n_closed(2).is_err());
    }

    #[test]
    fn label_sets() {
        let l31 = row_labels(3, 1).unwrap();
        let names: Vec<String> = l31.iter().map(ToString::to_string).collect();
        assert_eq!(names, ["D11", "D12", "D22"]);
        assert_eq!(row_labels(4, 1).unwrap().len(), 6);
        let l42 = row_labels(4, 2).unwrap();
        assert_eq!(l42.len(), 12);
        for sq in [vec![(0, 1), (0, 1)], vec![(0, 2), (0, 2)], vec![(1, 2), (1, 2)]] {
            assert!(l42.contains(&RowLabel::Product(sq)));
        }
        assert!(!l42.contains(&RowLabel::Product(vec![(0, 0), (0, 0)])));
        assert!(!l42.contains(&RowLabel::Product(vec![(0, 0), (0, 1)])));
    }

    #[test]
    fn bruteforce_counts() {
        assert_eq!(a_n_bruteforce(3).unwrap(), 4);
        assert_eq!(a_n_bruteforce(4).unwrap(), 19);
        assert_eq!(a_n_bruteforce(5).unwrap(), 106);
        assert!(a_n_bruteforce(9).is_err());
    }

    #[test]
    fn minor_sum_reproduces_closed_form_while_p_is_exact() {
        for n in 3..=6 {
            assert_eq!(big(a_n_minor_sum(n).unwrap() as u64), a_n_closed(n).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn product_label_canonicalises() {
        let a = RowLabel::product(&[(2, 1), (0, 0)]).unwrap();
        let b = RowLabel::product(&[(0, 0), (1, 2)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "D11*D23");
        assert!(RowLabel::product(&[(0, 0), (0, 0)]).is_none());
    }
}
