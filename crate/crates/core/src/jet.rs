//! Truncated multivariate power series.
//!
//! A [`Jet`] stores the Taylor coefficients of a function about a point up
//! to a total-degree `order`. Storage is sparse and canonical: a sorted map
//! with no explicit zeros, so equal jets compare equal and iteration is
//! reproducible.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{LinAlg, Mat};
use crate::scalar::{Rational, Scalar};

/// Exponent vector of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        Self(exps)
    }

    pub fn zero(num_vars: usize) -> Self {
        Self(vec![0; num_vars])
    }

    pub fn unit(num_vars: usize, var: usize) -> Self {
        let mut e = vec![0; num_vars];
        e[var] = 1;
        Self(e)
    }

    pub fn exps(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn get(&self, var: usize) -> u32 {
        self.0[var]
    }

    fn plus(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `alpha!` as an integer.
    pub fn factorial(&self) -> num_bigint::BigInt {
        self.0.iter().fold(num_bigint::BigInt::one(), |acc, &e| {
            acc * (1..=e).fold(num_bigint::BigInt::one(), |f, k| f * k)
        })
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// Truncated power series in `num_vars` variables, valid through total
/// degree `order`.
#[derive(Clone, PartialEq)]
pub struct Jet<S> {
    num_vars: usize,
    order: u32,
    coeffs: BTreeMap<MultiIndex, S>,
}

pub type ExactJet = Jet<Rational>;
pub type FloatJet = Jet<f64>;

impl<S: Scalar> Jet<S> {
    pub fn zero(num_vars: usize, order: u32) -> Self {
        Self { num_vars, order, coeffs: BTreeMap::new() }
    }

    pub fn constant(num_vars: usize, order: u32, c: S) -> Self {
        let mut j = Self::zero(num_vars, order);
        j.insert(MultiIndex::zero(num_vars), c);
        j
    }

    /// The coordinate function `z_var`.
    pub fn variable(num_vars: usize, order: u32, var: usize) -> Self {
        let mut j = Self::zero(num_vars, order);
        if order >= 1 {
            j.insert(MultiIndex::unit(num_vars, var), S::one());
        }
        j
    }

    /// Builds a jet from (exponents, coefficient) pairs; repeated monomials
    /// are summed and monomials above `order` dropped.
    pub fn from_terms(num_vars: usize, order: u32, terms: impl IntoIterator<Item = (MultiIndex, S)>) -> Result<Self> {
        let mut j = Self::zero(num_vars, order);
        for (idx, c) in terms {
            if idx.len() != num_vars {
                return Err(Error::VarMismatch(idx.len(), num_vars));
            }
            j.insert(idx, c);
        }
        Ok(j)
    }

    /// Adds `c` to the coefficient of `idx`, keeping the canonical form.
    pub fn insert(&mut self, idx: MultiIndex, c: S) {
        debug_assert_eq!(idx.len(), self.num_vars);
        if idx.degree() > self.order || c.is_zero() {
            return;
        }
        match self.coeffs.entry(idx) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = e.get().clone() + c;
                if v.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeff(&self, idx: &MultiIndex) -> S {
        self.coeffs.get(idx).cloned().unwrap_or_else(S::zero)
    }

    /// Coefficient by raw exponent slice.
    pub fn coeff_of(&self, exps: &[u32]) -> S {
        self.coeffs.get(&MultiIndex(exps.to_vec())).cloned().unwrap_or_else(S::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &S)> {
        self.coeffs.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn constant_term(&self) -> S {
        self.coeff(&MultiIndex::zero(self.num_vars))
    }

    /// Largest total degree among stored monomials.
    pub fn max_degree(&self) -> Option<u32> {
        self.coeffs.keys().map(MultiIndex::degree).max()
    }

    /// Lowers the truncation order.
    pub fn truncate(&self, order: u32) -> Self {
        let order = order.min(self.order);
        Self {
            num_vars: self.num_vars,
            order,
            coeffs: self.coeffs.iter().filter(|(k, _)| k.degree() <= order).map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    /// Same coefficients with a different declared order. Raising the order
    /// asserts that the stored polynomial is exact through the new order.
    pub fn with_order(&self, order: u32) -> Self {
        if order <= self.order {
            self.truncate(order)
        } else {
            Self { order, ..self.clone() }
        }
    }

    pub fn homogeneous_part(&self, degree: u32) -> Self {
        Self {
            num_vars: self.num_vars,
            order: self.order,
            coeffs: self.coeffs.iter().filter(|(k, _)| k.degree() == degree).map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    pub fn scale(&self, c: &S) -> Self {
        let mut out = Self::zero(self.num_vars, self.order);
        if c.is_zero() {
            return out;
        }
        for (k, v) in &self.coeffs {
            out.insert(k.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn map_coeffs<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Jet<T> {
        let mut out = Jet::zero(self.num_vars, self.order);
        for (k, v) in &self.coeffs {
            out.insert(k.clone(), f(v));
        }
        out
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.num_vars != other.num_vars {
            return Err(Error::VarMismatch(self.num_vars, other.num_vars));
        }
        Ok(())
    }

    /// Coefficientwise sum truncated to the smaller order.
    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.truncate(other.order);
        for (k, v) in &other.coeffs {
            out.insert(k.clone(), v.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.truncate(other.order);
        for (k, v) in &other.coeffs {
            out.insert(k.clone(), -v.clone());
        }
        Ok(out)
    }

    /// Cauchy product truncated to the smaller order.
    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let order = self.order.min(other.order);
        let mut out = Self::zero(self.num_vars, order);
        for (ka, va) in &self.coeffs {
            let da = ka.degree();
            if da > order {
                continue;
            }
            for (kb, vb) in &other.coeffs {
                if da + kb.degree() > order {
                    continue;
                }
                out.insert(ka.plus(kb), va.clone() * vb.clone());
            }
        }
        Ok(out)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::constant(self.num_vars, self.order, S::one());
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    /// Formal partial derivative; the result is valid through `order - 1`.
    pub fn diff(&self, var: usize) -> Result<Self> {
        if var >= self.num_vars {
            return Err(Error::VarOutOfRange { index: var, num_vars: self.num_vars });
        }
        let mut out = Self::zero(self.num_vars, self.order.saturating_sub(1));
        for (k, v) in &self.coeffs {
            let e = k.0[var];
            if e == 0 {
                continue;
            }
            let mut idx = k.0.clone();
            idx[var] -= 1;
            out.insert(MultiIndex(idx), v.clone() * S::from_int(e as i64));
        }
        Ok(out)
    }

    /// `outer(inner_1, ..., inner_m)`. Every inner jet must share its
    /// variable count and have a zero constant term; re-center with
    /// [`Jet::shift`] otherwise.
    pub fn compose(&self, inner: &[Jet<S>]) -> Result<Self> {
        if inner.len() != self.num_vars {
            return Err(Error::Arity { expected: self.num_vars, got: inner.len() });
        }
        let Some(first) = inner.first() else {
            // A jet in zero variables is a constant.
            return Ok(self.clone());
        };
        let q = first.num_vars;
        for (i, j) in inner.iter().enumerate() {
            if j.num_vars != q {
                return Err(Error::VarMismatch(j.num_vars, q));
            }
            if !j.constant_term().is_zero() {
                return Err(Error::NonzeroConstant(i));
            }
        }
        let order = inner.iter().map(|j| j.order).min().unwrap_or(0).min(self.order);
        let inner: Vec<Jet<S>> = inner.iter().map(|j| j.truncate(order)).collect();
        // powers[i][e] = inner_i^e, filled lazily up to the needed exponent.
        let mut powers: Vec<Vec<Jet<S>>> = inner.iter().map(|_| vec![Jet::constant(q, order, S::one())]).collect();
        let mut out = Jet::zero(q, order);
        for (k, v) in &self.coeffs {
            if k.degree() > order {
                continue;
            }
            let mut term = Jet::constant(q, order, v.clone());
            for (i, &e) in k.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap() * &inner[i];
                    powers[i].push(next);
                }
                term = &term * &powers[i][e as usize];
                if term.is_zero() {
                    break;
                }
            }
            for (tk, tv) in term.coeffs {
                out.insert(tk, tv);
            }
        }
        Ok(out)
    }

    /// Re-centres the jet: returns `z -> self(z + offset)`, treating the
    /// stored coefficients as an exact polynomial.
    pub fn shift(&self, offset: &[S]) -> Result<Self> {
        if offset.len() != self.num_vars {
            return Err(Error::Arity { expected: self.num_vars, got: offset.len() });
        }
        if offset.iter().all(Zero::is_zero) {
            return Ok(self.clone());
        }
        let mut out = Self::zero(self.num_vars, self.order);
        for (k, v) in &self.coeffs {
            // Expand prod_i (z_i + c_i)^{e_i} one variable at a time.
            let mut partial: Vec<(Vec<u32>, S)> = vec![(vec![0; self.num_vars], v.clone())];
            for (i, &e) in k.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let c = &offset[i];
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (exps, coef) in &partial {
                    let mut binom = S::one();
                    // term z_i^a c^{e-a} binom(e, a), a = 0..=e
                    for a in 0..=e {
                        if a > 0 {
                            binom = binom * S::from_int((e - a + 1) as i64) / S::from_int(a as i64);
                        }
                        let w = binom.clone() * num_traits::pow(c.clone(), (e - a) as usize);
                        if w.is_zero() {
                            continue;
                        }
                        let mut ex = exps.clone();
                        ex[i] += a;
                        next.push((ex, coef.clone() * w));
                    }
                }
                partial = next;
            }
            for (ex, c) in partial {
                out.insert(MultiIndex(ex), c);
            }
        }
        Ok(out)
    }

    /// Keeps only the variables in `keep` (in that order), after setting all
    /// other variables to zero.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        for &k in keep {
            if k >= self.num_vars {
                return Err(Error::VarOutOfRange { index: k, num_vars: self.num_vars });
            }
        }
        let mut out = Self::zero(keep.len(), self.order);
        for (k, v) in &self.coeffs {
            let kept: u32 = keep.iter().map(|&i| k.0[i]).sum();
            if kept != k.degree() {
                continue;
            }
            out.insert(MultiIndex(keep.iter().map(|&i| k.0[i]).collect()), v.clone());
        }
        Ok(out)
    }

    /// Places this jet into a larger variable set: variable `i` becomes
    /// variable `positions[i]` of the result.
    pub fn embed(&self, num_vars: usize, positions: &[usize]) -> Result<Self> {
        if positions.len() != self.num_vars {
            return Err(Error::Arity { expected: self.num_vars, got: positions.len() });
        }
        let mut out = Self::zero(num_vars, self.order);
        for (k, v) in &self.coeffs {
            let mut e = vec![0; num_vars];
            for (i, &p) in positions.iter().enumerate() {
                if p >= num_vars {
                    return Err(Error::VarOutOfRange { index: p, num_vars });
                }
                e[p] += k.0[i];
            }
            out.insert(MultiIndex(e), v.clone());
        }
        Ok(out)
    }

    /// Polynomial evaluation of the stored truncation.
    pub fn eval(&self, point: &[S]) -> Result<S> {
        if point.len() != self.num_vars {
            return Err(Error::Arity { expected: self.num_vars, got: point.len() });
        }
        let mut acc = S::zero();
        for (k, v) in &self.coeffs {
            let mut term = v.clone();
            for (i, &e) in k.0.iter().enumerate() {
                if e > 0 {
                    term = term * num_traits::pow(point[i].clone(), e as usize);
                }
            }
            acc = acc + term;
        }
        Ok(acc)
    }

    /// For a univariate jet, the coefficient of `t^h`.
    pub fn univariate_coeff(&self, h: u32) -> S {
        debug_assert_eq!(self.num_vars, 1);
        self.coeff_of(&[h])
    }
}

impl Jet<Rational> {
    /// Nearest-double conversion of every coefficient.
    pub fn to_float(&self) -> Jet<f64> {
        self.map_coeffs(f64::from_rational)
    }
}

/// Options for [`solve_implicit`].
#[derive(Clone, Copy, Debug)]
pub struct ImplicitOptions {
    /// Largest admissible 2-norm condition number of the Jacobian (float
    /// backends only).
    pub max_condition: f64,
    /// Tolerance for `F(0, 0) = 0` on float backends.
    pub root_tol: f64,
}

impl Default for ImplicitOptions {
    fn default() -> Self {
        Self { max_condition: 1e12, root_tol: 1e-12 }
    }
}

/// Solves `F(u(s), s) = 0` for `u(0) = 0`, degree by degree.
///
/// `f` holds `m` jets in the variables `(u_1..u_m, s_1..s_q)`; the result is
/// `m` jets in `(s_1..s_q)` valid through `order`.
pub fn solve_implicit<S: LinAlg>(f: &[Jet<S>], order: u32, opts: ImplicitOptions) -> Result<Vec<Jet<S>>> {
    let m = f.len();
    let Some(first) = f.first() else {
        return Ok(Vec::new());
    };
    let nv = first.num_vars;
    if nv < m {
        return Err(Error::Arity { expected: m, got: nv });
    }
    for j in f {
        if j.num_vars != nv {
            return Err(Error::VarMismatch(j.num_vars, nv));
        }
    }
    if f.iter().map(Jet::order).min().unwrap_or(0) < order {
        return Err(Error::InsufficientOrder { needed: order, have: f.iter().map(Jet::order).min().unwrap_or(0) });
    }
    let q = nv - m;
    let scale = f.iter().flat_map(|j| j.terms().map(|(_, v)| v.to_f64_lossy().abs())).fold(0.0, f64::max).max(1.0);
    for j in f {
        if !j.constant_term().is_negligible(scale, opts.root_tol) {
            return Err(Error::NotAtRoot);
        }
    }
    let jac = Mat::from_fn(m, m, |a, b| f[a].coeff(&MultiIndex::unit(nv, b)));
    if S::EXACT {
        if S::det(&jac).is_zero() {
            return Err(Error::SingularJacobian);
        }
    } else if S::condition(&jac) > opts.max_condition {
        return Err(Error::SingularJacobian);
    }

    let mut u: Vec<Jet<S>> = (0..m).map(|_| Jet::zero(q, order)).collect();
    let s_vars: Vec<Jet<S>> = (0..q).map(|i| Jet::variable(q, order, i)).collect();
    for d in 1..=order {
        let inner: Vec<Jet<S>> = u.iter().map(|j| j.truncate(d)).chain(s_vars.iter().map(|j| j.truncate(d))).collect();
        let residual: Vec<Jet<S>> = f.iter().map(|fa| fa.truncate(d).compose(&inner)).collect::<Result<_>>()?;
        let mut monomials: Vec<MultiIndex> = residual
            .iter()
            .flat_map(|r| r.terms().filter(|(k, _)| k.degree() == d).map(|(k, _)| k.clone()))
            .collect();
        monomials.sort();
        monomials.dedup();
        for mono in monomials {
            let rhs: Vec<S> = residual.iter().map(|r| -r.coeff(&mono)).collect();
            let x = S::solve(&jac, &rhs)?;
            for (b, xb) in x.into_iter().enumerate() {
                u[b].insert(mono.clone(), xb);
            }
        }
    }
    Ok(u)
}

impl<S: Scalar> fmt::Debug for Jet<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet[{} vars, order {}](", self.num_vars, self.order)?;
        for (i, (k, v)) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{v}*z^{:?}", k.0)?;
        }
        write!(f, ")")
    }
}

// Operator forms panic on variable-count mismatch; the `checked_*` methods
// report it as an error instead.
impl<S: Scalar> Add for &Jet<S> {
    type Output = Jet<S>;
    fn add(self, rhs: &Jet<S>) -> Jet<S> {
        self.checked_add(rhs).expect("jet add")
    }
}

impl<S: Scalar> Sub for &Jet<S> {
    type Output = Jet<S>;
    fn sub(self, rhs: &Jet<S>) -> Jet<S> {
        self.checked_sub(rhs).expect("jet sub")
    }
}

impl<S: Scalar> Mul for &Jet<S> {
    type Output = Jet<S>;
    fn mul(self, rhs: &Jet<S>) -> Jet<S> {
        self.checked_mul(rhs).expect("jet mul")
    }
}

impl<S: Scalar> Neg for &Jet<S> {
    type Output = Jet<S>;
    fn neg(self) -> Jet<S> {
        self.scale(&-S::one())
    }
}

/// Univariate helper: `sum_h c_h t^h`.
pub fn univariate<S: Scalar>(order: u32, coeffs: &[S]) -> Jet<S> {
    let mut j = Jet::zero(1, order);
    for (h, c) in coeffs.iter().enumerate() {
        j.insert(MultiIndex(vec![h as u32]), c.clone());
    }
    j
}
