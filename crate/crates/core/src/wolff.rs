//! Determinant lower bounds behind the polynomial Wolff axiom.
//!
//! For a matrix `U`, `det(U + D(t))` expands as
//! `det U + sum_label C_label(U) * prod_label(t) + det D(t)`, where the labels
//! are the product rows of the contact matrix. Pairing the coefficient vector
//! `(C, 1)` with the contact matrix gives the derivatives
//! `H_h = d^h/dt^h det(U + D(t)) |_{t=0}`. A full-rank contact matrix forces
//! `max_h |H_h| >~ 1 + |C|_1`, which is what [`certify_pwa`] measures.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::combinatorics::RowLabel;
use crate::contact::{build_contact_matrix, contact_order, ContactMatrix, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{LinAlg, Mat};
use crate::optimize::{gauss_newton, nelder_mead};
use crate::phase::{hessian_along_curve, HessianCurve, Phase};
use crate::quadrature::integrate_abs_poly;
use crate::rng::{seeded, trial_rng};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct DetExpansion<S: Scalar> {
    pub u: Mat<S>,
    pub det_u: S,
    /// Coefficients of the product labels; labels absent from the map have
    /// coefficient zero. The determinant row always has coefficient one.
    pub coeffs: BTreeMap<RowLabel, S>,
}

impl<S: Scalar> DetExpansion<S> {
    pub fn coeff(&self, label: &RowLabel) -> S {
        match label {
            RowLabel::Det => S::one(),
            RowLabel::Product(_) => self.coeffs.get(label).cloned().unwrap_or_else(S::zero),
        }
    }

    /// `|C|_1` over the product labels.
    pub fn c_norm1(&self) -> f64 {
        self.coeffs.values().map(|c| c.to_f64_lossy().abs()).sum()
    }
}

/// All permutations of `0..m` with their signs, in lexicographic order.
fn signed_permutations(m: usize) -> Vec<(Vec<usize>, bool)> {
    fn go(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                go(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut perms = Vec::new();
    go(&mut Vec::new(), &mut vec![false; m], &mut perms);
    perms
        .into_iter()
        .map(|p| {
            let inversions = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
            (p, inversions % 2 == 0)
        })
        .collect()
}

/// Multilinear expansion of `det(U + E)` over a symbolic symmetric `E`,
/// collected per canonical label. `u` need not be symmetric.
pub fn det_expansion_of<S: LinAlg>(u: &Mat<S>) -> Result<DetExpansion<S>> {
    let m = u.nrows();
    if u.ncols() != m || m == 0 {
        return Err(Error::InvalidParameter("U must be square and non-empty".into()));
    }
    let mut coeffs: BTreeMap<RowLabel, S> = BTreeMap::new();
    let full = (1usize << m) - 1;
    for (perm, even) in signed_permutations(m) {
        for mask in 1..full {
            let mut w = if even { S::one() } else { -S::one() };
            let mut factors = Vec::new();
            for (i, &pi) in perm.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    factors.push((i, pi));
                } else {
                    w = w * u[(i, pi)].clone();
                }
            }
            if w.is_zero() {
                continue;
            }
            let label = RowLabel::product(&factors).expect("permutation factors are orientation-feasible");
            let entry = coeffs.entry(label).or_insert_with(S::zero);
            *entry = entry.clone() + w;
        }
    }
    coeffs.retain(|_, v| !v.is_zero());
    Ok(DetExpansion { u: u.clone(), det_u: S::det(u), coeffs })
}

pub fn det_expansion<S: LinAlg>(hc: &HessianCurve<S>, u: &Mat<S>) -> Result<DetExpansion<S>> {
    if u.nrows() != hc.dim() {
        return Err(Error::Arity { expected: hc.dim(), got: u.nrows() });
    }
    det_expansion_of(u)
}

/// `det U + sum C * products + det D(t)` as a jet.
pub fn expansion_jet<S: Scalar>(hc: &HessianCurve<S>, exp: &DetExpansion<S>) -> Jet<S> {
    let ord = hc.order();
    let mut acc = &Jet::constant(1, ord, exp.det_u.clone()) + &hc.det_jet;
    for (label, c) in &exp.coeffs {
        acc = &acc + &hc.product(label.factors()).scale(c);
    }
    acc
}

/// `(C, 1) . contact matrix`.
pub fn h_vector<S: Scalar>(cm: &ContactMatrix<S>, exp: &DetExpansion<S>) -> Result<Vec<S>> {
    for label in exp.coeffs.keys() {
        if cm.row(label).is_none() {
            return Err(Error::InvalidParameter(format!("label {label} is not a row of the contact matrix")));
        }
    }
    let mut h = vec![S::zero(); cm.l as usize];
    for (label, row) in cm.labels.iter().zip(&cm.rows) {
        let c = exp.coeff(label);
        if c.is_zero() {
            continue;
        }
        for (hk, v) in h.iter_mut().zip(row) {
            *hk = hk.clone() + c.clone() * v.clone();
        }
    }
    Ok(h)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }
}

impl DoubleDouble {
    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Self { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        let lo = s.lo + self.lo + o.lo;
        Self::two_sum(s.hi, lo)
    }

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        Self::two_sum(p, e)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// One term of the expansion of `det(U + E)`: a sign, the `U` entries it
/// multiplies, and the label of the `E` monomial (`None` for `det U`).
#[derive(Clone, Debug)]
struct ExpansionTerm {
    sign: f64,
    u_entries: Vec<usize>,
    label: Option<usize>,
}

/// Float view of the contact matrix and the expansion structure, for fast
/// repeated evaluation of the objectives.
#[derive(Clone, Debug)]
pub struct FloatProblem {
    pub m: usize,
    pub l: u32,
    pub eps0: f64,
    num_labels: usize,
    rows: Vec<Vec<f64>>,
    terms: Vec<ExpansionTerm>,
    /// Derivative row `h = l + 1` of each label, when the phase order allows.
    next: Option<Vec<f64>>,
}

impl FloatProblem {
    pub fn new<S: Scalar>(cm: &ContactMatrix<S>, eps0: f64, next: Option<Vec<f64>>) -> Self {
        let m = cm.n - 1;
        let index: BTreeMap<&RowLabel, usize> = cm.labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let full = (1usize << m) - 1;
        let mut terms = Vec::new();
        for (perm, even) in signed_permutations(m) {
            let sign = if even { 1.0 } else { -1.0 };
            // mask = set of rows taking their factor from E; the full mask is
            // the det D row, whose coefficient is fixed to one.
            for mask in 0..full {
                let mut factors = Vec::new();
                let mut u_entries = Vec::new();
                for (i, &pi) in perm.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        factors.push((i, pi));
                    } else {
                        u_entries.push(i * m + pi);
                    }
                }
                let label = (mask != 0).then(|| {
                    let l = RowLabel::product(&factors).expect("permutation factors are orientation-feasible");
                    index[&l]
                });
                terms.push(ExpansionTerm { sign, u_entries, label });
            }
        }
        Self {
            m,
            l: cm.l,
            eps0,
            num_labels: cm.labels.len(),
            rows: cm.rows.iter().map(|r| r.iter().map(Scalar::to_f64_lossy).collect()).collect(),
            terms,
            next,
        }
    }

    /// `(det U, C per label (det row = 1))` for a row-major `U`.
    pub fn expansion(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let u: Vec<DoubleDouble> = u.iter().map(|&v| v.into()).collect();
        let (det, c) = self.expansion_dd(&u);
        (det.to_f64(), c.into_iter().map(DoubleDouble::to_f64).collect())
    }

    /// The expansion in double-double arithmetic. The rescaled objective
    /// multiplies `det U` by `lambda^(n-1)` with no compensating decay, and
    /// near its minimisers `det U` sits far below the rounding error of a
    /// plain f64 evaluation.
    fn expansion_dd(&self, u: &[DoubleDouble]) -> (DoubleDouble, Vec<DoubleDouble>) {
        let mut det = DoubleDouble::default();
        let mut c = vec![DoubleDouble::default(); self.num_labels];
        *c.last_mut().expect("det row") = 1.0.into();
        for t in &self.terms {
            let w = t.u_entries.iter().fold(DoubleDouble::from(t.sign), |acc, &k| acc.mul(u[k]));
            match t.label {
                Some(i) => c[i] = c[i].add(w),
                None => det = det.add(w),
            }
        }
        (det, c)
    }

    pub fn h(&self, c: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.l as usize];
        for (ci, row) in c.iter().zip(&self.rows) {
            for (hk, v) in h.iter_mut().zip(row) {
                *hk += ci * v;
            }
        }
        h
    }

    fn w_coeffs_dd(&self, u: &[DoubleDouble]) -> Vec<f64> {
        let (det, c) = self.expansion_dd(u);
        let mut w = vec![det.to_f64()];
        let mut fact = 1.0;
        for k in 0..self.l as usize {
            fact *= (k + 1) as f64;
            let hk = c.iter().zip(&self.rows).fold(DoubleDouble::default(), |acc, (ci, row)| acc.add(ci.mul(row[k].into())));
            w.push(hk.to_f64() / fact);
        }
        w
    }

    /// `max_h |H_h| / (1 + |C|_1)`.
    pub fn objective(&self, u: &[f64]) -> f64 {
        let (_, c) = self.expansion(u);
        let h = self.h(&c);
        let num = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let c1: f64 = c[..c.len() - 1].iter().map(|v| v.abs()).sum();
        num / (1.0 + c1)
    }

    /// Taylor coefficients `w_0..w_l` of `det(U + D(t))`.
    pub fn w_coeffs(&self, u: &[f64]) -> Vec<f64> {
        let u: Vec<DoubleDouble> = u.iter().map(|&v| v.into()).collect();
        self.w_coeffs_dd(&u)
    }

    /// `int_{|t| <= eps0} |W(t)| dt / (1 + |C|_1)` and the remainder bound
    /// `2 eps0^(l+2) |w_{l+1}|` when the next coefficient is known.
    pub fn quadrature(&self, u: &[f64]) -> (f64, Option<f64>) {
        let (_, c) = self.expansion(u);
        let c1: f64 = c[..c.len() - 1].iter().map(|v| v.abs()).sum();
        let w = self.w_coeffs(u);
        let integral = integrate_abs_poly(&w, -self.eps0, self.eps0);
        let rem = self.next.as_ref().map(|next| {
            let fact: f64 = (1..=self.l as u64 + 1).map(|v| v as f64).product();
            let hn: f64 = c.iter().zip(next).map(|(a, b)| a * b).sum();
            2.0 * self.eps0.powi(self.l as i32 + 2) * (hn / fact).abs()
        });
        (integral / (1.0 + c1), rem.map(|r| r / (1.0 + c1)))
    }

    /// `lambda^(n-1) int_{|t| <= eps0} |W(t / lambda)| dt`.
    pub fn rescaled(&self, u: &[f64], lambda: f64) -> f64 {
        self.rescaled_split(u, &vec![0.0; u.len()], lambda)
    }

    /// [`Self::rescaled`] at `U = base + offset`, summed without rounding so
    /// that points closer together than an f64 ulp of `base` are distinct.
    pub fn rescaled_split(&self, base: &[f64], offset: &[f64], lambda: f64) -> f64 {
        let u: Vec<DoubleDouble> = base.iter().zip(offset).map(|(&b, &o)| DoubleDouble::two_sum(b, o)).collect();
        let w = self.w_coeffs_dd(&u);
        let scaled: Vec<f64> = w.iter().enumerate().map(|(k, v)| v / lambda.powi(k as i32)).collect();
        lambda.powi(self.m as i32) * integrate_abs_poly(&scaled, -self.eps0, self.eps0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PwaSampling {
    pub num_random_u: usize,
    pub optimizer_steps: usize,
    pub seed: u64,
    /// Sup-norm bound for random samples.
    pub bound: f64,
    /// Largest scale of the projective sweep `s * U0`.
    pub sweep_max: f64,
    /// Number of optimizer restarts (best random samples).
    pub restarts: usize,
}

impl Default for PwaSampling {
    fn default() -> Self {
        Self { num_random_u: 1000, optimizer_steps: 200, seed: 0, bound: 1e3, sweep_max: 1e6, restarts: 4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaSearch {
    pub c_star: f64,
    pub worst_u: Vec<f64>,
    pub num_samples: usize,
    /// All evaluated candidate matrices, in a deterministic order.
    pub candidates: Vec<Vec<f64>>,
}

fn argmin(values: &[f64]) -> usize {
    values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0))).map(|(i, _)| i).unwrap_or(0)
}

/// Minimises `max_h |H_h| / (1 + |C|_1)` over `U`: random samples, a
/// projective scale sweep along the best directions, then Nelder-Mead
/// restarts.
pub fn minimize_pwa_objective(prob: &FloatProblem, cfg: &PwaSampling) -> Result<PwaSearch> {
    if cfg.num_random_u == 0 {
        return Err(Error::InvalidParameter("empty certificate: no U samples requested".into()));
    }
    let d = prob.m * prob.m;
    let mut rng = seeded(cfg.seed);
    let log_b = cfg.bound.log10();
    let mut candidates: Vec<Vec<f64>> = (0..cfg.num_random_u)
        .map(|_| {
            let s = 10f64.powf(rng.random_range(-2.0..=log_b));
            (0..d).map(|_| s * rng.random_range(-1.0..=1.0)).collect()
        })
        .collect();
    let values: Vec<f64> = candidates.par_iter().map(|u| prob.objective(u)).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let restarts: Vec<Vec<f64>> = order.iter().take(cfg.restarts.max(1)).map(|&i| candidates[i].clone()).collect();

    // Projective sweep: s * U0 / |U0|_inf on a log grid.
    let steps = 64;
    let sweep: Vec<Vec<f64>> = restarts
        .iter()
        .flat_map(|u0| {
            let norm = u0.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            (0..=steps).map(move |k| {
                let s = 10f64.powf(-2.0 + (cfg.sweep_max.log10() + 2.0) * k as f64 / steps as f64);
                u0.iter().map(|v| s * v / norm).collect::<Vec<f64>>()
            })
        })
        .collect();
    let sweep_vals: Vec<f64> = sweep.par_iter().map(|u| prob.objective(u)).collect();
    let best_sweep = argmin(&sweep_vals);

    let mut starts = restarts;
    starts.push(sweep[best_sweep].clone());
    let polished: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|x0| {
            let scale = x0.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            let r = nelder_mead(|x| prob.objective(x), x0, 0.1 * scale, cfg.optimizer_steps, 0.0);
            (r.x, r.value)
        })
        .collect();

    let mut all_vals = values;
    all_vals.extend(sweep_vals);
    candidates.extend(sweep);
    for (x, v) in polished {
        candidates.push(x);
        all_vals.push(v);
    }
    let i = argmin(&all_vals);
    Ok(PwaSearch { c_star: all_vals[i], worst_u: candidates[i].clone(), num_samples: candidates.len(), candidates })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaCertificate {
    pub c_star: f64,
    pub num_samples: usize,
    pub worst_u: Mat<f64>,
    pub quadrature_floor: f64,
    pub floor_u: Mat<f64>,
    /// Remainder bound at the floor-attaining `U` (normalised like the
    /// floor); `None` if the phase jet is too short to bound it.
    pub remainder_bound: Option<f64>,
    pub contact_order: u32,
    pub l: u32,
}

pub fn float_problem<S: LinAlg>(p: &Phase<S>, point: &[S], l: u32) -> Result<FloatProblem> {
    let hc = hessian_along_curve(p, point, l)?;
    let cm = build_contact_matrix(&hc, l)?;
    let next = if p.order() >= l + 3 {
        let hc1 = hessian_along_curve(p, point, l + 1)?;
        let cm1 = build_contact_matrix(&hc1, l + 1)?;
        Some(cm1.rows.iter().map(|r| r[l as usize].to_f64_lossy()).collect())
    } else {
        None
    };
    Ok(FloatProblem::new(&cm, p.eps0().to_f64_lossy(), next))
}

/// Certifies `max_h |H_h| >~ 1 + |C|_1` over sampled `U` at one point.
pub fn certify_pwa<S: LinAlg>(p: &Phase<S>, point: &[S], l: u32, cfg: &PwaSampling) -> Result<PwaCertificate> {
    if cfg.num_random_u == 0 {
        return Err(Error::InvalidParameter("empty certificate: no U samples requested".into()));
    }
    let report = contact_order(p, point, l, DEFAULT_RANK_TOL)?;
    let order = report.contact_order.ok_or(Error::NoContactOrder(l))?;
    let prob = float_problem(p, point, l)?;
    let search = minimize_pwa_objective(&prob, cfg)?;
    let quad: Vec<(f64, Option<f64>)> = search.candidates.par_iter().map(|u| prob.quadrature(u)).collect();
    let i = argmin(&quad.iter().map(|q| q.0).collect::<Vec<_>>());
    let m = prob.m;
    let to_mat = |u: &[f64]| Mat::from_fn(m, m, |a, b| u[a * m + b]);
    Ok(PwaCertificate {
        c_star: search.c_star,
        num_samples: search.num_samples,
        worst_u: to_mat(&search.worst_u),
        quadrature_floor: quad[i].0,
        floor_u: to_mat(&search.candidates[i]),
        remainder_bound: quad[i].1,
        contact_order: order,
        l,
    })
}

/// Objective search without the contact-order precondition; used to witness
/// that the mechanism fails for phases without finite contact order.
pub fn pwa_objective_search<S: LinAlg>(p: &Phase<S>, point: &[S], l: u32, cfg: &PwaSampling) -> Result<PwaSearch> {
    let prob = float_problem(p, point, l)?;
    minimize_pwa_objective(&prob, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaledConfig {
    pub random_starts: usize,
    pub optimizer_steps: usize,
    pub seed: u64,
}

impl Default for RescaledConfig {
    fn default() -> Self {
        Self { random_starts: 24, optimizer_steps: 400, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescaledPoint {
    pub lambda: f64,
    pub floor: f64,
    /// The minimiser rounded to f64; the exact point is `u + u_low`, which
    /// [`FloatProblem::rescaled_split`] evaluates without rounding.
    pub u: Vec<f64>,
    pub u_low: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescaledReport {
    pub points: Vec<RescaledPoint>,
    /// Least-squares slope of `log floor` against `log lambda`; `None` with
    /// fewer than two points.
    pub slope: Option<f64>,
    /// The exponent `n - 1 - l` predicted for the floor.
    pub predicted: i64,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Starting matrices that annihilate the leading Taylor coefficients of
/// `det(U + D(t))`, one family per number of killed coefficients.
fn kill_starts(prob: &FloatProblem, cfg: &RescaledConfig) -> Vec<Vec<f64>> {
    let d = prob.m * prob.m;
    let kmax = (prob.l as usize).min(d);
    let mut out = Vec::new();
    for k in 1..=kmax {
        for s in 0..cfg.random_starts.div_ceil(4).max(1) {
            let mut rng = trial_rng(cfg.seed, (k * 1000 + s) as u64);
            let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..=4.0)).collect();
            let (x, r) = gauss_newton(|u| prob.w_coeffs(u)[..k].to_vec(), &x0, 100);
            if r < 1e-9 {
                out.push(x);
            }
        }
    }
    out
}

/// A point `U = base + offset` kept unrounded, with its log objective.
#[derive(Clone, Debug)]
struct SplitPoint {
    base: Vec<f64>,
    offset: Vec<f64>,
    value: f64,
}

impl SplitPoint {
    fn rounded(&self) -> Vec<f64> {
        self.base.iter().zip(&self.offset).map(|(b, o)| b + o).collect()
    }
}

/// Nelder-Mead in the coordinates `v_k = w_k / lambda^k` of the low-order
/// coefficients of `W`, pulled back to `U` through the pseudo-inverse of the
/// Jacobian at the current point. Near minimisers these coordinates are
/// well conditioned while `U` itself is not.
fn polish_in_coefficients(prob: &FloatProblem, lambda: f64, start: SplitPoint, steps: usize) -> SplitPoint {
    use nalgebra::DMatrix;
    let l = prob.l as usize;
    let u0 = start.rounded();
    let d = u0.len();
    let w0 = prob.w_coeffs(&u0);
    let mut jac = DMatrix::zeros(l, d);
    for j in 0..d {
        let h = 1e-6 * u0[j].abs().max(1.0);
        let (mut up, mut dn) = (u0.clone(), u0.clone());
        up[j] += h;
        dn[j] -= h;
        let (wp, wd) = (prob.w_coeffs(&up), prob.w_coeffs(&dn));
        for k in 0..l {
            jac[(k, j)] = (wp[k] - wd[k]) / (2.0 * h) / lambda.powi(k as i32);
        }
    }
    let Ok(pinv) = jac.pseudo_inverse(1e-12) else {
        return start;
    };
    let offset = |v: &[f64]| -> Vec<f64> {
        (0..d).map(|i| start.offset[i] + (0..l).map(|k| pinv[(i, k)] * v[k]).sum::<f64>()).collect()
    };
    let obj = |v: &[f64]| prob.rescaled_split(&start.base, &offset(v), lambda).max(f64::MIN_POSITIVE).ln();
    let size = (0..l).fold(0.0f64, |a, k| a.max((w0[k] / lambda.powi(k as i32)).abs()));
    let step = if size > 0.0 { size } else { start.value.exp() / lambda.powi(prob.m as i32) };
    let r = nelder_mead(obj, &vec![0.0; l], step, steps, 0.0);
    if r.value < start.value {
        SplitPoint { offset: offset(&r.x), value: r.value, base: start.base }
    } else {
        start
    }
}

/// `lambda^(n-1) min_U int_{|t| <= eps0} |det(U + D(t / lambda))| dt` for
/// each `lambda`, with the fitted scaling exponent.
pub fn rescaled_floor<S: LinAlg>(
    p: &Phase<S>,
    point: &[S],
    lambdas: &[f64],
    l: u32,
    cfg: &RescaledConfig,
) -> Result<RescaledReport> {
    if let Some(bad) = lambdas.iter().find(|&&v| v < 1.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 1, got {bad}")));
    }
    let prob = float_problem(p, point, l)?;
    let d = prob.m * prob.m;
    let mut starts = vec![vec![0.0; d]];
    let mut rng = seeded(cfg.seed);
    for _ in 0..cfg.random_starts {
        let s = 10f64.powf(rng.random_range(-2.0..=1.0));
        starts.push((0..d).map(|_| s * rng.random_range(-1.0..=1.0)).collect());
    }
    starts.extend(kill_starts(&prob, cfg));

    // Lambdas are processed in increasing order so each one is warm-started
    // from the previous minimiser.
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]).then(a.cmp(&b)));
    let mut found: Vec<Option<RescaledPoint>> = vec![None; lambdas.len()];
    let mut warm: Option<SplitPoint> = None;
    for &li in &order {
        let lambda = lambdas[li];
        let obj = |u: &[f64]| prob.rescaled(u, lambda).max(f64::MIN_POSITIVE).ln();
        let mut pool: Vec<SplitPoint> = starts
            .par_iter()
            .map(|u| SplitPoint { base: u.clone(), offset: vec![0.0; d], value: obj(u) })
            .collect();
        if let Some(w) = &warm {
            let value = prob.rescaled_split(&w.base, &w.offset, lambda).max(f64::MIN_POSITIVE).ln();
            pool.push(SplitPoint { value, ..w.clone() });
        }
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.sort_by(|&a, &b| pool[a].value.total_cmp(&pool[b].value).then(a.cmp(&b)));
        let polished: Vec<SplitPoint> = idx[..idx.len().min(4)]
            .par_iter()
            .map(|&i| {
                let mut best = pool[i].clone();
                if best.offset.iter().all(|&o| o == 0.0) {
                    let scale = best.base.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
                    for step in [0.05, 1.0 / lambda] {
                        let r = nelder_mead(obj, &best.base, step * scale, cfg.optimizer_steps, 0.0);
                        if r.value < best.value {
                            best = SplitPoint { base: r.x, offset: vec![0.0; d], value: r.value };
                        }
                    }
                }
                for _ in 0..3 {
                    best = polish_in_coefficients(&prob, lambda, best, cfg.optimizer_steps);
                }
                best
            })
            .collect();
        let best = polished
            .into_iter()
            .fold(pool[idx[0]].clone(), |a, b| if b.value < a.value { b } else { a });
        found[li] = Some(RescaledPoint {
            lambda,
            floor: best.value.exp(),
            u: best.rounded(),
            u_low: best.base.iter().zip(&best.offset).map(|(b, o)| DoubleDouble::two_sum(*b, *o).lo).collect(),
        });
        warm = Some(best);
    }
    let points: Vec<RescaledPoint> = found.into_iter().map(|p| p.expect("every lambda processed")).collect();
    let lx: Vec<f64> = points.iter().map(|q| q.lambda.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|q| q.floor.ln()).collect();
    Ok(RescaledReport { slope: fit_slope(&lx, &ly), points, predicted: (p.n() as i64 - 1) - l as i64 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma52 {
    /// `lambda^(l - (n-1)) r^(-(n - n')/2)`
    pub contact_branch: f64,
    /// `(r^(-1/2) + r / lambda)^(n - n')`
    pub geometric_branch: f64,
    pub min: f64,
    /// The two summands `r^(-1/2)` and `r / lambda` of the geometric branch;
    /// they coincide at `r = lambda^(2/3)`.
    pub inner: (f64, f64),
}

pub fn lemma52_coefficient(n: usize, n_prime: usize, l: u32, r: f64, lambda: f64) -> Result<Lemma52> {
    if !(1.0..=lambda).contains(&r) {
        return Err(Error::InvalidParameter(format!("need 1 <= r <= lambda, got r = {r}, lambda = {lambda}")));
    }
    if 2 * n_prime < n + 1 || n_prime > n - 1 {
        return Err(Error::InvalidParameter(format!("need (n+1)/2 <= n' <= n-1, got n = {n}, n' = {n_prime}")));
    }
    let k = (n - n_prime) as i32;
    let contact_branch = lambda.powi(l as i32 - (n as i32 - 1)) * r.powf(-(k as f64) / 2.0);
    let inner = (r.powf(-0.5), r / lambda);
    let geometric_branch = (inner.0 + inner.1).powi(k);
    Ok(Lemma52 { contact_branch, geometric_branch, min: contact_branch.min(geometric_branch), inner })
}

/// Checks the jet identity `det(U + D) = det U + (C, 1) . F` exactly.
pub fn identity_holds<S: LinAlg>(hc: &HessianCurve<S>, exp: &DetExpansion<S>) -> bool {
    hc.shifted_det(&exp.u) == expansion_jet(hc, exp)
}

/// The vector `(C, 1)` in contact-matrix row order.
pub fn coefficient_vector<S: Scalar>(cm: &ContactMatrix<S>, exp: &DetExpansion<S>) -> Vec<S> {
    cm.labels.iter().map(|l| if *l == RowLabel::Det { S::one() } else { exp.coeff(l) }).collect()
}
