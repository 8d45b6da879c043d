//! Dense linear algebra over the scalar backends.
//!
//! Exact matrices are cleared of denominators row by row and reduced with
//! Bareiss' fraction-free elimination over `BigInt`. Floating matrices go
//! through nalgebra (SVD for rank, LU for determinants and solves).

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Mat<T> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].to_f64_lossy())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64_lossy().abs()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        (0..self.rows)
            .map(|i| {
                self.row(i).iter().zip(v).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    pub fn sub_matrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Outcome of a rank computation.
#[derive(Clone, Debug, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    /// Smallest of the `min(rows, cols)` singular values (float backend only).
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
}

/// Backend-specific dense kernels.
pub trait LinAlg: Scalar {
    /// Rank. `tol` is relative to the largest singular value and is ignored
    /// by the exact backend.
    fn rank(m: &Mat<Self>, tol: f64) -> RankInfo;
    fn det(m: &Mat<Self>) -> Self;
    /// Solves `m x = b` for square nonsingular `m`.
    fn solve(m: &Mat<Self>, b: &[Self]) -> Result<Vec<Self>>;
    /// 2-norm condition number estimate (infinite when singular).
    fn condition(m: &Mat<Self>) -> f64 {
        let svd = m.to_f64().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin == 0.0 {
            f64::INFINITY
        } else {
            smax / smin
        }
    }
}

impl LinAlg for Rational {
    fn rank(m: &Mat<Self>, _tol: f64) -> RankInfo {
        let mut rows = integer_rows(m);
        RankInfo { rank: bareiss_rank(&mut rows), sigma_min: None, sigma_max: None }
    }

    fn det(m: &Mat<Self>) -> Self {
        assert_eq!(m.rows, m.cols, "determinant of non-square matrix");
        if m.rows == 0 {
            return Rational::one();
        }
        let mut scale = BigInt::one();
        let mut rows = Vec::with_capacity(m.rows);
        for i in 0..m.rows {
            let l = m.row(i).iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
            scale *= &l;
            rows.push(m.row(i).iter().map(|v| (v * BigRational::from_integer(l.clone())).to_integer()).collect());
        }
        BigRational::new(bareiss_det(rows), scale)
    }

    fn solve(m: &Mat<Self>, b: &[Self]) -> Result<Vec<Self>> {
        gauss_solve(m, b, |_| false)
    }
}

impl LinAlg for f64 {
    fn rank(m: &Mat<Self>, tol: f64) -> RankInfo {
        float_rank(m.to_f64(), tol)
    }

    fn det(m: &Mat<Self>) -> Self {
        if m.rows == 0 {
            return 1.0;
        }
        m.to_f64().lu().determinant()
    }

    fn solve(m: &Mat<Self>, b: &[Self]) -> Result<Vec<Self>> {
        let scale = m.max_abs();
        gauss_solve(m, b, |v: &f64| v.abs() <= 1e-14 * scale)
    }
}

impl LinAlg for f32 {
    fn rank(m: &Mat<Self>, tol: f64) -> RankInfo {
        float_rank(m.to_f64(), tol)
    }

    fn det(m: &Mat<Self>) -> Self {
        if m.rows == 0 {
            return 1.0;
        }
        m.to_f64().lu().determinant() as f32
    }

    fn solve(m: &Mat<Self>, b: &[Self]) -> Result<Vec<Self>> {
        let scale = m.max_abs();
        gauss_solve(m, b, |v: &f32| (v.abs() as f64) <= 1e-6 * scale)
    }
}

fn float_rank(m: DMatrix<f64>, tol: f64) -> RankInfo {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RankInfo { rank: 0, sigma_min: None, sigma_max: Some(0.0) };
    }
    let sv = m.svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let rank = if smax == 0.0 { 0 } else { sv.iter().filter(|&&s| s > tol * smax).count() };
    RankInfo { rank, sigma_min: Some(smin), sigma_max: Some(smax) }
}

/// Clears denominators row by row; row scaling preserves rank.
fn integer_rows(m: &Mat<Rational>) -> Vec<Vec<BigInt>> {
    (0..m.rows)
        .map(|i| {
            let l = m.row(i).iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
            m.row(i).iter().map(|v| (v * BigRational::from_integer(l.clone())).to_integer()).collect()
        })
        .collect()
}

/// Fraction-free elimination; returns the rank and leaves `a` in echelon form.
pub fn bareiss_rank(a: &mut [Vec<BigInt>]) -> usize {
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let mut prev = BigInt::one();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        for i in r + 1..rows {
            if a[i][c].is_zero() {
                // Row i is untouched in this column; still needs the Bareiss
                // update for later columns.
                for j in c + 1..cols {
                    let v = &a[r][c] * &a[i][j];
                    a[i][j] = v / &prev;
                }
                continue;
            }
            for j in c + 1..cols {
                let v = &a[r][c] * &a[i][j] - &a[i][c] * &a[r][j];
                a[i][j] = v / &prev;
            }
            a[i][c] = BigInt::zero();
        }
        prev = a[r][c].clone();
        r += 1;
    }
    r
}

fn bareiss_det(mut a: Vec<Vec<BigInt>>) -> BigInt {
    let n = a.len();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !a[i][k].is_zero()) else {
            return BigInt::zero();
        };
        if p != k {
            a.swap(p, k);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[k][k] * &a[i][j] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * a[n - 1][n - 1].clone()
}

/// Gaussian elimination with partial pivoting by absolute value.
fn gauss_solve<S: Scalar>(m: &Mat<S>, b: &[S], negligible: impl Fn(&S) -> bool) -> Result<Vec<S>> {
    let n = m.rows;
    if m.cols != n || b.len() != n {
        return Err(Error::Arity { expected: n, got: b.len() });
    }
    let mut a = m.to_rows();
    let mut rhs = b.to_vec();
    for k in 0..n {
        let p = (k..n)
            .filter(|&i| !a[i][k].is_zero())
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .ok_or(Error::SingularJacobian)?;
        if negligible(&a[p][k]) {
            return Err(Error::SingularJacobian);
        }
        a.swap(p, k);
        rhs.swap(p, k);
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let f = a[i][k].clone() / a[k][k].clone();
            for j in k..n {
                let v = a[k][j].clone() * f.clone();
                a[i][j] = a[i][j].clone() - v;
            }
            rhs[i] = rhs[i].clone() - rhs[k].clone() * f;
        }
    }
    let mut x = vec![S::zero(); n];
    for k in (0..n).rev() {
        let s = (k + 1..n).fold(rhs[k].clone(), |acc, j| acc - a[k][j].clone() * x[j].clone());
        x[k] = s / a[k][k].clone();
    }
    Ok(x)
}

/// Determinant over an arbitrary commutative ring by Laplace expansion along
/// rows with memoisation on the set of used columns. `O(2^n n)` ring
/// operations; meant for the `(n-1) x (n-1)` jet matrices (n - 1 <= 8).
pub fn det_ring<T: Clone>(
    m: &[Vec<T>],
    zero: &T,
    one: &T,
    add: impl Fn(&T, &T) -> T,
    sub: impl Fn(&T, &T) -> T,
    mul: impl Fn(&T, &T) -> T,
) -> T {
    let n = m.len();
    assert!(n <= 20, "det_ring: matrix too large");
    // memo[mask] = determinant of the minor with rows (n - popcount(mask))..n
    // and the columns in `mask`.
    let full = (1usize << n) - 1;
    let mut memo: Vec<Option<T>> = vec![None; 1 << n];
    memo[0] = Some(one.clone());
    for mask in 1..=full {
        let k = mask.count_ones() as usize;
        let row = n - k;
        let mut acc = zero.clone();
        let mut sign_pos = true;
        for c in 0..n {
            if mask & (1 << c) == 0 {
                continue;
            }
            let rest = memo[mask & !(1 << c)].as_ref().expect("memo order");
            let term = mul(&m[row][c], rest);
            acc = if sign_pos { add(&acc, &term) } else { sub(&acc, &term) };
            sign_pos = !sign_pos;
        }
        memo[mask] = Some(acc);
    }
    memo[full].take().expect("full determinant")
}

/// Exact positive-definiteness by leading principal minors.
pub fn is_positive_definite_exact(m: &Mat<Rational>) -> bool {
    (1..=m.nrows()).all(|k| {
        let idx: Vec<usize> = (0..k).collect();
        Rational::det(&m.sub_matrix(&idx, &idx)).is_positive()
    })
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}
