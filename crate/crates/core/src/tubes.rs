//! Curved δ-tube families generated by a phase, rasterised on a cubic grid.
//!
//! A tube with direction `y` and anchor `ω` is the δ-neighbourhood, slice by
//! slice in `t`, of the curve `t -> (x(t), t)` solving `∇_y φ(x, t; y) = ω`.
//! Grid cells have side `h` and index `i` has centre `(i + 1/2) h` in every
//! coordinate; coordinates are ordered `(x_1..x_{n-1}, t)`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::Phase;
use crate::rng::trial_rng;
use crate::scalar::Scalar;
use crate::wolff::fit_slope;

/// Largest residual `|∇_y φ(x, t; y) - ω|_∞` accepted from [`phi_map`].
pub const NEWTON_TOL: f64 = 1e-12;

/// Curves may leave the `eps0` box in `x` by this factor before the solver
/// reports drift.
pub const DRIFT_FACTOR: f64 = 4.0;

/// A polynomial in local coordinates `z - center`, evaluated in f64. Each
/// term keeps only its nonzero `(variable, exponent)` factors.
#[derive(Clone, Debug)]
struct Poly {
    terms: Vec<(f64, Vec<(usize, usize)>)>,
}

impl Poly {
    fn from_dense(terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Self {
        let terms = terms
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(e, c)| (c, e.iter().enumerate().filter(|(_, &k)| k > 0).map(|(v, &k)| (v, k as usize)).collect()))
            .collect();
        Poly { terms }
    }

    /// `powers[v * stride + k] = (z_v - c_v)^k`.
    fn eval(&self, powers: &[f64], stride: usize) -> f64 {
        self.terms.iter().map(|(c, f)| f.iter().fold(*c, |acc, &(v, k)| acc * powers[v * stride + k])).sum()
    }

    fn diff(&self, var: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter_map(|(c, f)| {
                let pos = f.iter().position(|&(v, _)| v == var)?;
                let mut f = f.clone();
                let k = f[pos].1;
                if k == 1 {
                    f.remove(pos);
                } else {
                    f[pos].1 -= 1;
                }
                Some((c * k as f64, f))
            })
            .collect();
        Poly { terms }
    }

    fn max_degree(&self) -> usize {
        self.terms.iter().flat_map(|(_, f)| f.iter().map(|&(_, k)| k)).max().unwrap_or(0)
    }
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting;
/// `a` is row-major `m x m`. Returns false when singular.
fn solve_small(a: &mut [f64], b: &mut [f64], m: usize) -> bool {
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs())).expect("nonempty");
        if a[piv * m + col] == 0.0 || !a[piv * m + col].is_finite() {
            return false;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            for k in col..m {
                a[r * m + k] -= f * a[col * m + k];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..m).rev() {
        let s: f64 = (col + 1..m).map(|k| a[col * m + k] * b[k]).sum();
        b[col] = (b[col] - s) / a[col * m + col];
    }
    true
}

/// Solver for the curve map `Φ(ω, t; y)`, built once per phase.
#[derive(Clone, Debug)]
pub struct CurveMap {
    n: usize,
    center: Vec<f64>,
    eps0: f64,
    /// `∂_{y_j} φ`
    grad_y: Vec<Poly>,
    /// `jac[j][i] = ∂_{x_i} ∂_{y_j} φ`
    jac: Vec<Vec<Poly>>,
    max_degree: usize,
}

impl CurveMap {
    pub fn new<S: Scalar>(p: &Phase<S>) -> Self {
        let n = p.n();
        let phi = Poly::from_dense(p.jet().terms().map(|(e, c)| (e.exps().to_vec(), c.to_f64_lossy())));
        let grad_y: Vec<Poly> = (0..n - 1).map(|j| phi.diff(p.y_var(j))).collect();
        let jac = grad_y.iter().map(|g| (0..n - 1).map(|i| g.diff(p.x_var(i))).collect()).collect();
        Self {
            n,
            center: p.center().iter().map(Scalar::to_f64_lossy).collect(),
            eps0: p.eps0().to_f64_lossy(),
            max_degree: phi.max_degree(),
            grad_y,
            jac,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// Centre of the `t` range.
    pub fn t_center(&self) -> f64 {
        self.center[self.n - 1]
    }

    pub fn x_center(&self) -> &[f64] {
        &self.center[..self.n - 1]
    }

    pub fn y_center(&self) -> &[f64] {
        &self.center[self.n..]
    }

    fn powers(&self, x: &[f64], t: f64, y: &[f64], out: &mut Vec<f64>) {
        let stride = self.max_degree + 1;
        out.clear();
        for (z, c) in x.iter().chain(std::iter::once(&t)).chain(y).zip(&self.center) {
            let d = z - c;
            let mut p = 1.0;
            out.push(p);
            for _ in 0..self.max_degree {
                p *= d;
                out.push(p);
            }
        }
        debug_assert_eq!(out.len(), stride * self.center.len());
    }

    /// `∇_y φ(x, t; y) - ω`.
    pub fn residual(&self, v: &[f64], x: &[f64], t: f64, y: &[f64]) -> Vec<f64> {
        let mut pw = Vec::new();
        self.powers(x, t, y, &mut pw);
        self.grad_y.iter().zip(v).map(|(g, vj)| g.eval(&pw, self.max_degree + 1) - vj).collect()
    }

    fn check_inputs(&self, v: &[f64], t: f64, y: &[f64]) -> Result<()> {
        let m = self.n - 1;
        if v.len() != m {
            return Err(Error::Arity { expected: m, got: v.len() });
        }
        if y.len() != m {
            return Err(Error::Arity { expected: m, got: y.len() });
        }
        let worst = y
            .iter()
            .zip(self.y_center())
            .map(|(a, c)| (a - c).abs())
            .fold((t - self.t_center()).abs(), f64::max);
        if worst > self.eps0 * (1.0 + 1e-12) {
            return Err(Error::OutsideDomain(worst));
        }
        Ok(())
    }

    fn newton(&self, v: &[f64], x0: &[f64], t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let m = self.n - 1;
        let stride = self.max_degree + 1;
        let mut x = x0.to_vec();
        let mut pw = Vec::with_capacity(stride * self.center.len());
        let mut r = vec![0.0; m];
        let mut jac = vec![0.0; m * m];
        let mut res = f64::INFINITY;
        for _ in 0..60 {
            self.powers(&x, t, y, &mut pw);
            for (j, (g, vj)) in self.grad_y.iter().zip(v).enumerate() {
                r[j] = g.eval(&pw, stride) - vj;
            }
            res = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if res <= 0.1 * NEWTON_TOL {
                break;
            }
            for j in 0..m {
                for i in 0..m {
                    jac[j * m + i] = self.jac[j][i].eval(&pw, stride);
                }
            }
            if !solve_small(&mut jac, &mut r, m) {
                return Err(Error::Newton(format!("singular Jacobian at t = {t}")));
            }
            for (xi, s) in x.iter_mut().zip(&r) {
                *xi -= s;
            }
            let drift = x.iter().zip(self.x_center()).map(|(a, c)| (a - c).abs()).fold(0.0f64, f64::max);
            if !drift.is_finite() || drift > DRIFT_FACTOR * self.eps0 {
                return Err(Error::OutsideDomain(drift));
            }
        }
        if res > NEWTON_TOL {
            return Err(Error::Newton(format!("residual {res:e} at t = {t} exceeds {NEWTON_TOL:e}")));
        }
        Ok(x)
    }

    /// `x = Φ(ω, t; y)`, by continuation in `t` from the centre of the range.
    pub fn solve(&self, v: &[f64], t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(v, t, y)?;
        let t0 = self.t_center();
        let steps = ((t - t0).abs() / (self.eps0 / 16.0)).ceil().max(1.0) as usize;
        let mut x = self.newton(v, self.x_center(), t0, y)?;
        for k in 1..=steps {
            x = self.newton(v, &x, t0 + (t - t0) * k as f64 / steps as f64, y)?;
        }
        Ok(x)
    }

    /// The curve at each `ts[k]`, `ts` increasing, continued outward from the
    /// sample nearest the centre.
    pub fn curve(&self, v: &[f64], y: &[f64], ts: &[f64]) -> Result<Vec<Vec<f64>>> {
        if ts.is_empty() {
            return Ok(Vec::new());
        }
        for &t in ts {
            self.check_inputs(v, t, y)?;
        }
        let t0 = self.t_center();
        let mid = (0..ts.len())
            .min_by(|&a, &b| (ts[a] - t0).abs().total_cmp(&(ts[b] - t0).abs()))
            .expect("nonempty");
        let mut out = vec![Vec::new(); ts.len()];
        out[mid] = self.solve(v, ts[mid], y)?;
        for k in mid + 1..ts.len() {
            out[k] = self.newton(v, &out[k - 1], ts[k], y)?;
        }
        for k in (0..mid).rev() {
            out[k] = self.newton(v, &out[k + 1], ts[k], y)?;
        }
        Ok(out)
    }
}

/// `Φ(ω, t; y)`: the `x` with `∇_y φ(x, t; y) = ω`.
pub fn phi_map<S: Scalar>(p: &Phase<S>, v: &[f64], t: f64, y: &[f64]) -> Result<Vec<f64>> {
    CurveMap::new(p).solve(v, t, y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tube {
    pub y: Vec<f64>,
    pub anchor: Vec<f64>,
    pub delta: f64,
    /// `t` of the first sample and the sample pitch.
    pub t0: f64,
    pub dt: f64,
    /// Centreline `x` values, `n - 1` per sample.
    xs: Vec<f64>,
}

impl Tube {
    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn num_samples(&self) -> usize {
        self.xs.len() / self.dim()
    }

    /// `(x(t_k), t_k)`.
    pub fn sample(&self, k: usize) -> (&[f64], f64) {
        let m = self.dim();
        (&self.xs[k * m..(k + 1) * m], self.t0 + k as f64 * self.dt)
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.t0, self.t0 + (self.num_samples() - 1) as f64 * self.dt)
    }

    /// Centreline at `t` by linear interpolation between samples.
    pub fn center_at(&self, t: f64, out: &mut [f64]) {
        let m = self.dim();
        let last = self.num_samples() - 1;
        let s = ((t - self.t0) / self.dt).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last.saturating_sub(1));
        let w = if last == 0 { 0.0 } else { s - k as f64 };
        for (d, o) in out.iter_mut().enumerate().take(m) {
            let a = self.xs[k * m + d];
            let b = if last == 0 { a } else { self.xs[(k + 1) * m + d] };
            *o = a + w * (b - a);
        }
    }
}

/// How each tube's anchor `ω` is chosen from its direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AnchorRule {
    /// The same anchor for every tube.
    Fixed { anchor: Vec<f64> },
    /// Uniform in the `eps0` box around the centre, one stream per tube.
    Random { seed: u64 },
    /// One anchor per tube in direction-grid order.
    List { anchors: Vec<Vec<f64>> },
    /// `ω = A y + b`.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub delta: f64,
    pub spacing: f64,
    pub anchors: AnchorRule,
    /// Centreline sample pitch in `t`; defaults to `delta / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_step: Option<f64>,
}

impl FamilySpec {
    pub fn new(delta: f64, spacing: f64, anchors: AnchorRule) -> Self {
        Self { delta, spacing, anchors, sample_step: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubeFamily {
    pub n: usize,
    pub delta: f64,
    pub spacing: f64,
    pub tubes: Vec<Tube>,
    /// Pairwise direction distance exceeds `delta`.
    pub separation_ok: bool,
    /// The `t` range covered by every tube.
    pub t_range: (f64, f64),
}

/// Directions `c_y + k * spacing` inside the `eps0` box, lexicographic in `k`.
pub fn direction_grid(center: &[f64], eps0: f64, spacing: f64) -> Vec<Vec<f64>> {
    let kmax = (eps0 / spacing * (1.0 + 1e-12)).floor() as i64;
    let mut out = Vec::new();
    let m = center.len();
    let mut k = vec![-kmax; m];
    loop {
        out.push(center.iter().zip(&k).map(|(c, &ki)| c + ki as f64 * spacing).collect());
        let mut d = m;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            if k[d] < kmax {
                k[d] += 1;
                break;
            }
            k[d] = -kmax;
        }
    }
}

/// One tube per grid direction, each sampled on a common uniform `t` grid
/// over the phase's `eps0` range.
pub fn build_family<S: Scalar>(p: &Phase<S>, spec: &FamilySpec) -> Result<TubeFamily> {
    if !(spec.delta > 0.0 && spec.delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {}", spec.delta)));
    }
    if !(spec.spacing > 0.0 && spec.spacing.is_finite()) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {}", spec.spacing)));
    }
    let map = CurveMap::new(p);
    let m = map.n() - 1;
    if m > MAX_X_DIM {
        return Err(Error::InvalidParameter(format!("tube families support n <= {}, got {}", MAX_X_DIM + 1, map.n())));
    }
    let dirs = direction_grid(map.y_center(), map.eps0(), spec.spacing);
    let anchors: Vec<Vec<f64>> = match &spec.anchors {
        AnchorRule::Fixed { anchor } => vec![anchor.clone(); dirs.len()],
        AnchorRule::Random { seed } => (0..dirs.len())
            .map(|i| {
                let mut rng = trial_rng(*seed, i as u64);
                map.x_center().iter().map(|c| c + rng.random_range(-map.eps0()..=map.eps0())).collect()
            })
            .collect(),
        AnchorRule::List { anchors } => {
            if anchors.len() != dirs.len() {
                return Err(Error::InvalidParameter(format!(
                    "anchor list has {} entries for {} directions",
                    anchors.len(),
                    dirs.len()
                )));
            }
            anchors.clone()
        }
        AnchorRule::Affine { matrix, offset } => {
            if matrix.len() != m || matrix.iter().any(|r| r.len() != m) || offset.len() != m {
                return Err(Error::InvalidParameter(format!("affine anchor rule must be {m} x {m} plus offset")));
            }
            dirs.iter()
                .map(|y| (0..m).map(|i| offset[i] + (0..m).map(|j| matrix[i][j] * y[j]).sum::<f64>()).collect())
                .collect()
        }
    };
    if let Some(bad) = anchors.iter().find(|a| a.len() != m) {
        return Err(Error::Arity { expected: m, got: bad.len() });
    }
    let step = spec.sample_step.unwrap_or(spec.delta / 2.0);
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("sample step must be positive, got {step}")));
    }
    let (lo, hi) = (map.t_center() - map.eps0(), map.t_center() + map.eps0());
    let intervals = ((hi - lo) / step).ceil().max(1.0) as usize;
    let dt = (hi - lo) / intervals as f64;
    let ts: Vec<f64> = (0..=intervals).map(|k| lo + k as f64 * dt).collect();
    let tubes = dirs
        .par_iter()
        .zip(&anchors)
        .map(|(y, a)| {
            let curve = map.curve(a, y, &ts)?;
            Ok(Tube { y: y.clone(), anchor: a.clone(), delta: spec.delta, t0: lo, dt, xs: curve.concat() })
        })
        .collect::<Result<Vec<_>>>()?;
    let separation_ok = tubes.len() < 2 || spec.spacing > spec.delta;
    Ok(TubeFamily { n: map.n(), delta: spec.delta, spacing: spec.spacing, tubes, separation_ok, t_range: (lo, hi) })
}

impl TubeFamily {
    /// Family with the given tubes only (same `delta` and `t` range).
    pub fn subset(&self, keep: &[usize]) -> TubeFamily {
        let tubes: Vec<Tube> = keep.iter().map(|&i| self.tubes[i].clone()).collect();
        TubeFamily { tubes, ..self.clone_empty() }
    }

    fn clone_empty(&self) -> TubeFamily {
        TubeFamily {
            n: self.n,
            delta: self.delta,
            spacing: self.spacing,
            tubes: Vec::new(),
            separation_ok: self.separation_ok,
            t_range: self.t_range,
        }
    }

    /// Smallest pairwise direction distance, by brute force.
    pub fn min_direction_gap(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.tubes.iter().enumerate() {
            for b in &self.tubes[i + 1..] {
                let d = a.y.iter().zip(&b.y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                best = Some(best.map_or(d, |c| c.min(d)));
            }
        }
        best
    }
}

fn check_grid(fam: &TubeFamily, h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) || h > fam.delta / 2.0 {
        return Err(Error::InvalidParameter(format!("grid too coarse: h = {h} exceeds delta / 2 = {}", fam.delta / 2.0)));
    }
    Ok(())
}

/// Indices of the `t` cells whose centres lie in the family's `t` range.
fn t_cells(fam: &TubeFamily, h: f64) -> std::ops::RangeInclusive<i64> {
    let (lo, hi) = fam.t_range;
    let first = ((lo / h) - 0.5).ceil() as i64;
    let last = ((hi / h) - 0.5).floor() as i64;
    first..=last
}

fn cell_center(i: i64, h: f64) -> f64 {
    (i as f64 + 0.5) * h
}

/// Largest supported `x` dimension `n - 1`.
pub const MAX_X_DIM: usize = 8;

/// Calls `f(prefix, lo, hi)` for each run of `x` cells whose centres are
/// within `delta` of `c`: the cells share the leading indices `prefix` and
/// take every last index in `lo..=hi`.
fn for_each_disc_row(c: &[f64], delta: f64, h: f64, mut f: impl FnMut(&[i64], i64, i64)) {
    let m = c.len();
    let (head, last) = c.split_at(m - 1);
    let mut lo = [0i64; MAX_X_DIM];
    let mut hi = [0i64; MAX_X_DIM];
    for (d, v) in head.iter().enumerate() {
        lo[d] = ((v - delta) / h - 0.5).ceil() as i64;
        hi[d] = ((v + delta) / h - 0.5).floor() as i64;
        if lo[d] > hi[d] {
            return;
        }
    }
    let mut idx = lo;
    let d2 = delta * delta;
    loop {
        let rem = d2 - idx.iter().zip(head).map(|(&i, v)| (cell_center(i, h) - v).powi(2)).sum::<f64>();
        if rem >= 0.0 {
            let w = rem.sqrt();
            let a = ((last[0] - w) / h - 0.5).ceil() as i64;
            let b = ((last[0] + w) / h - 0.5).floor() as i64;
            if a <= b {
                f(&idx[..m - 1], a, b);
            }
        }
        let mut d = m - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            if idx[d] < hi[d] {
                idx[d] += 1;
                break;
            }
            idx[d] = lo[d];
        }
    }
}

/// `Σ χ_T` on grid cells, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub h: f64,
    pub origin: Vec<f64>,
    /// Cell index `(x_1..x_{n-1}, t)` to the number of tubes meeting it.
    pub counts: BTreeMap<Vec<i64>, u32>,
}

impl GridField {
    /// Full rasterisation; memory grows with the number of occupied cells, so
    /// large families should use [`count_histogram`].
    pub fn rasterize(fam: &TubeFamily, h: f64) -> Result<Self> {
        check_grid(fam, h)?;
        let mut counts = BTreeMap::new();
        let mut c = vec![0.0; fam.n - 1];
        for k in t_cells(fam, h) {
            let t = cell_center(k, h);
            for tube in &fam.tubes {
                tube.center_at(t, &mut c);
                for_each_disc_row(&c, fam.delta, h, |prefix, a, b| {
                    for i in a..=b {
                        let mut key = prefix.to_vec();
                        key.push(i);
                        key.push(k);
                        *counts.entry(key).or_insert(0) += 1;
                    }
                });
            }
        }
        Ok(Self { h, origin: vec![0.0; fam.n], counts })
    }

    pub fn histogram(&self) -> Histogram {
        let mut cells_by_count = BTreeMap::new();
        for &v in self.counts.values() {
            *cells_by_count.entry(v).or_insert(0) += 1;
        }
        Histogram { n: self.origin.len(), h: self.h, cells_by_count }
    }
}

/// Number of grid cells at each nonzero value of `Σ χ_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub n: usize,
    pub h: f64,
    pub cells_by_count: BTreeMap<u32, u64>,
}

impl Histogram {
    pub fn occupied(&self) -> u64 {
        self.cells_by_count.values().sum()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    pub fn measure(&self) -> f64 {
        self.occupied() as f64 * self.cell_volume()
    }

    pub fn max(&self) -> u32 {
        self.cells_by_count.keys().next_back().copied().unwrap_or(0)
    }

    /// `‖Σ χ_T‖_p`, scaled by the maximum to stay finite for large `p`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let top = self.max() as f64;
        if top == 0.0 {
            return 0.0;
        }
        let s: f64 = self.cells_by_count.iter().map(|(&c, &k)| k as f64 * (c as f64 / top).powf(p)).sum();
        top * (s * self.cell_volume()).powf(1.0 / p)
    }
}

/// Histogram of `Σ χ_T`, rasterised one `t` slice at a time.
pub fn count_histogram(fam: &TubeFamily, h: f64) -> Result<Histogram> {
    check_grid(fam, h)?;
    let m = fam.n - 1;
    let slices: Vec<i64> = t_cells(fam, h).collect();
    let per_slice: Vec<Vec<u64>> = slices
        .par_iter()
        .map(|&k| {
            let t = cell_center(k, h);
            let mut centers = vec![0.0; fam.tubes.len() * m];
            for (tube, c) in fam.tubes.iter().zip(centers.chunks_mut(m)) {
                tube.center_at(t, c);
            }
            let mut hist = Vec::new();
            if centers.is_empty() {
                return hist;
            }
            let lo: Vec<i64> = (0..m)
                .map(|d| centers.chunks(m).map(|c| ((c[d] - fam.delta) / h - 0.5).ceil() as i64).min().expect("nonempty"))
                .collect();
            let hi: Vec<i64> = (0..m)
                .map(|d| centers.chunks(m).map(|c| ((c[d] + fam.delta) / h - 0.5).floor() as i64).max().expect("nonempty"))
                .collect();
            let dims: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1).max(0) as usize).collect();
            let mut buf = vec![0u32; dims.iter().product()];
            for c in centers.chunks(m) {
                for_each_disc_row(c, fam.delta, h, |prefix, a, b| {
                    let row = prefix.iter().zip(&lo).zip(&dims).fold(0usize, |acc, ((&i, &l), &d)| acc * d + (i - l) as usize);
                    let start = row * dims[m - 1] + (a - lo[m - 1]) as usize;
                    for v in &mut buf[start..=start + (b - a) as usize] {
                        *v += 1;
                    }
                });
            }
            for v in buf {
                let v = v as usize;
                if v >= hist.len() {
                    hist.resize(v + 1, 0);
                }
                hist[v] += 1;
            }
            hist
        })
        .collect();
    let mut cells_by_count = BTreeMap::new();
    for hist in per_slice {
        for (c, &k) in hist.iter().enumerate().skip(1) {
            if k > 0 {
                *cells_by_count.entry(c as u32).or_insert(0) += k;
            }
        }
    }
    Ok(Histogram { n: fam.n, h, cells_by_count })
}

/// Volume of the union of the tubes: occupied cells times `h^n`.
pub fn union_measure(fam: &TubeFamily, h: f64) -> Result<f64> {
    Ok(count_histogram(fam, h)?.measure())
}

/// Volume of the unit ball in `R^k`.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(k - 2) * 2.0 * std::f64::consts::PI / k as f64,
    }
}

/// `|T| = ω_{n-1} δ^{n-1} L` with `L` the `t` length covered by the grid.
pub fn nominal_tube_volume(fam: &TubeFamily, h: f64) -> f64 {
    let cells = t_cells(fam, h);
    let len = (cells.end() - cells.start() + 1).max(0) as f64 * h;
    unit_ball_volume(fam.n - 1) * fam.delta.powi(fam.n as i32 - 1) * len
}

/// Exponent of `δ^{-1}` in the maximal estimate at `p`, clamped at zero so
/// that `p = 1` compares total masses.
pub fn maximal_exponent(n: usize, p: f64) -> f64 {
    (n as f64 - 1.0 - n as f64 / p).max(0.0)
}

/// `‖Σ χ_T‖_p / (δ^{-κ(p)} (Σ |T|)^{1/p})`.
pub fn lp_ratio(fam: &TubeFamily, p: f64, h: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    if fam.tubes.is_empty() {
        return Err(Error::InvalidParameter("empty tube family".into()));
    }
    let hist = count_histogram(fam, h)?;
    let mass = fam.tubes.len() as f64 * nominal_tube_volume(fam, h);
    let kappa = maximal_exponent(fam.n, p);
    Ok(hist.lp_norm(p) / (fam.delta.powf(-kappa) * mass.powf(1.0 / p)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InSetCount {
    pub count: usize,
    pub total: usize,
    /// `count / (|S| δ^{1-n})`
    pub ratio: f64,
}

/// Tubes all of whose cells satisfy `inside`, called with cell centres
/// `(x_1..x_{n-1}, t)`.
pub fn tubes_in_set(
    fam: &TubeFamily,
    h: f64,
    inside: impl Fn(&[f64]) -> bool + Sync,
    set_measure: f64,
) -> Result<InSetCount> {
    check_grid(fam, h)?;
    if !(set_measure > 0.0) {
        return Err(Error::InvalidParameter(format!("set measure must be positive, got {set_measure}")));
    }
    let m = fam.n - 1;
    let cells: Vec<i64> = t_cells(fam, h).collect();
    let count = fam
        .tubes
        .par_iter()
        .filter(|tube| {
            let mut c = vec![0.0; m];
            let mut point = vec![0.0; fam.n];
            cells.iter().all(|&k| {
                let t = cell_center(k, h);
                tube.center_at(t, &mut c);
                point[m] = t;
                let mut ok = true;
                for_each_disc_row(&c, fam.delta, h, |prefix, a, b| {
                    if !ok {
                        return;
                    }
                    for (p, &i) in point.iter_mut().zip(prefix) {
                        *p = cell_center(i, h);
                    }
                    for i in a..=b {
                        point[m - 1] = cell_center(i, h);
                        if !inside(&point) {
                            ok = false;
                            return;
                        }
                    }
                });
                ok
            })
        })
        .count();
    let ratio = count as f64 / (set_measure * fam.delta.powi(1 - fam.n as i32));
    Ok(InSetCount { count, total: fam.tubes.len(), ratio })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    /// Direction spacing is `delta * spacing_factor`.
    pub spacing_factor: f64,
    /// Grid side is `delta * h_factor`.
    pub h_factor: f64,
    pub anchors: AnchorRule,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { spacing_factor: 1.0 + 1.0 / 16.0, h_factor: 0.25, anchors: AnchorRule::Fixed { anchor: Vec::new() } }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanPoint {
    pub delta: f64,
    pub tubes: usize,
    pub measure: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressionScan {
    pub points: Vec<ScanPoint>,
    /// Slope of `log measure` against `log delta`.
    pub slope: f64,
}

/// Union measure of the family at each `delta`. An empty fixed anchor means
/// the centre of the `x` box.
pub fn compression_scan<S: Scalar>(p: &Phase<S>, deltas: &[f64], cfg: &ScanConfig) -> Result<CompressionScan> {
    let mut distinct: Vec<f64> = deltas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 distinct deltas, got {}", distinct.len())));
    }
    if let Some(bad) = deltas.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::InvalidParameter(format!("deltas must lie in (0, 1), got {bad}")));
    }
    let anchors = match &cfg.anchors {
        AnchorRule::Fixed { anchor } if anchor.is_empty() => {
            AnchorRule::Fixed { anchor: p.center()[..p.n() - 1].iter().map(Scalar::to_f64_lossy).collect() }
        }
        other => other.clone(),
    };
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let spec = FamilySpec::new(delta, delta * cfg.spacing_factor, anchors.clone());
        let fam = build_family(p, &spec)?;
        let measure = union_measure(&fam, delta * cfg.h_factor)?;
        points.push(ScanPoint { delta, tubes: fam.tubes.len(), measure });
    }
    let lx: Vec<f64> = points.iter().map(|q| q.delta.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|q| q.measure.ln()).collect();
    let slope = fit_slope(&lx, &ly).filter(|s| s.is_finite()).ok_or_else(|| Error::InvalidParameter("degenerate fit".into()))?;
    Ok(CompressionScan { points, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int, Rational};

    fn with_eps0(p: Phase<Rational>, eps0: Rational) -> Phase<Rational> {
        Phase::new(p.n(), p.jet().clone(), p.center().to_vec(), eps0).unwrap()
    }

    fn translation_invariant() -> Phase<Rational> {
        // x.y + t (y1^2 + y1 y2 + 3 y2^2)
        let e = |y1: u32, y2: u32| vec![0, 0, 1, y1, y2];
        Phase::x_dot_y_plus(3, 4, &[(e(2, 0), rat_int(1)), (e(1, 1), rat_int(1)), (e(0, 2), rat_int(3))]).unwrap()
    }

    #[test]
    fn phi_map_closed_form() {
        let p = translation_invariant();
        let (v, t, y) = ([0.01, -0.02], 0.07, [0.03, -0.05]);
        let x = phi_map(&p, &v, t, &y).unwrap();
        let grad = [2.0 * y[0] + y[1], y[0] + 6.0 * y[1]];
        for i in 0..2 {
            assert!((x[i] - (v[i] - t * grad[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn phi_map_zero_on_q_term_axis() {
        let e = |t: u32, y1: u32, y2: u32| vec![0, 0, t, y1, y2];
        let p = Phase::x_dot_y_plus(
            3,
            6,
            &[(e(1, 2, 0), rat_int(1)), (e(1, 0, 2), rat_int(1)), (e(2, 2, 0), rat_int(1)), (e(3, 1, 1), rat_int(1)), (e(4, 0, 2), rat_int(1))],
        )
        .unwrap();
        for t in [-0.1, -0.03, 0.0, 0.05, 0.1] {
            let x = phi_map(&p, &[0.0, 0.0], t, &[0.0, 0.0]).unwrap();
            assert!(x.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn phi_map_nonlinear_in_x() {
        // x.y + x1^2 y1 + t y1 y2: Newton is needed.
        let p = Phase::x_dot_y_plus(3, 4, &[(vec![2, 0, 0, 1, 0], rat_int(1)), (vec![0, 0, 1, 1, 1], rat_int(1))]).unwrap();
        let map = CurveMap::new(&p);
        let (v, t, y) = ([0.05, 0.02], 0.08, [0.04, -0.06]);
        let x = map.solve(&v, t, &y).unwrap();
        assert!(map.residual(&v, &x, t, &y).iter().all(|r| r.abs() <= NEWTON_TOL));
        assert!((x[0] + x[0] * x[0] + t * y[1] - v[0]).abs() < 1e-13);
    }

    #[test]
    fn phi_map_domain_errors() {
        let p = translation_invariant();
        assert!(matches!(phi_map(&p, &[0.0, 0.0], 0.2, &[0.0, 0.0]), Err(Error::OutsideDomain(_))));
        assert!(matches!(phi_map(&p, &[0.0], 0.0, &[0.0, 0.0]), Err(Error::Arity { .. })));
    }

    #[test]
    fn family_geometry() {
        let p = translation_invariant();
        let delta = 1.0 / 32.0;
        let spec = FamilySpec::new(delta, delta * (1.0 + 1.0 / 16.0), AnchorRule::Fixed { anchor: vec![0.0, 0.0] });
        let fam = build_family(&p, &spec).unwrap();
        assert_eq!(fam.tubes.len(), 49);
        assert!(fam.separation_ok);
        assert!(fam.min_direction_gap().unwrap() > delta);
        let tight = build_family(&p, &FamilySpec::new(delta, delta, spec.anchors.clone())).unwrap();
        assert!(!tight.separation_ok);
        // Bush: every centreline passes through the anchor at t = 0.
        for tube in &fam.tubes {
            let mut c = [0.0; 2];
            tube.center_at(0.0, &mut c);
            assert!(c.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn anchor_rules() {
        let p = translation_invariant();
        let delta = 0.05;
        let fam = build_family(&p, &FamilySpec::new(delta, 0.06, AnchorRule::Random { seed: 3 })).unwrap();
        let again = build_family(&p, &FamilySpec::new(delta, 0.06, AnchorRule::Random { seed: 3 })).unwrap();
        assert_eq!(fam, again);
        assert!(fam.tubes.iter().all(|t| t.anchor.iter().all(|a| a.abs() <= 0.1)));
        let affine = AnchorRule::Affine { matrix: vec![vec![0.0, 0.0], vec![0.0, -1.0]], offset: vec![0.0, 0.0] };
        let fam = build_family(&p, &FamilySpec::new(delta, 0.06, affine)).unwrap();
        assert!(fam.tubes.iter().all(|t| t.anchor[0] == 0.0 && t.anchor[1] == -t.y[1]));
        let short = AnchorRule::List { anchors: vec![vec![0.0, 0.0]] };
        assert!(build_family(&p, &FamilySpec::new(delta, 0.06, short)).is_err());
    }

    #[test]
    fn single_tube_volume() {
        let p = translation_invariant();
        let delta = 1.0 / 32.0;
        let fam = build_family(&p, &FamilySpec::new(delta, 1.0, AnchorRule::Fixed { anchor: vec![0.0, 0.0] })).unwrap();
        assert_eq!(fam.tubes.len(), 1);
        let exact = std::f64::consts::PI * delta * delta * 0.2;
        let coarse = union_measure(&fam, delta / 4.0).unwrap();
        let fine = union_measure(&fam, delta / 8.0).unwrap();
        assert!((coarse / exact - 1.0).abs() < 0.2, "{coarse} vs {exact}");
        assert!((coarse - fine).abs() / fine <= 0.1);
        assert!(matches!(union_measure(&fam, delta), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn streaming_matches_field() {
        let p = translation_invariant();
        let delta = 1.0 / 16.0;
        let fam = build_family(&p, &FamilySpec::new(delta, 0.07, AnchorRule::Random { seed: 9 })).unwrap();
        let h = delta / 4.0;
        let field = GridField::rasterize(&fam, h).unwrap();
        assert_eq!(field.histogram(), count_histogram(&fam, h).unwrap());
    }

    #[test]
    fn parallel_tubes_add() {
        let p = translation_invariant();
        let delta = 1.0 / 32.0;
        let single = |x0: f64| build_family(&p, &FamilySpec::new(delta, 1.0, AnchorRule::Fixed { anchor: vec![x0, 0.0] })).unwrap();
        let (a, b) = (single(0.0), single(0.2));
        let both = TubeFamily { tubes: vec![a.tubes[0].clone(), b.tubes[0].clone()], ..a.clone() };
        let h = delta / 4.0;
        let (ma, mb, mab) = (union_measure(&a, h).unwrap(), union_measure(&b, h).unwrap(), union_measure(&both, h).unwrap());
        assert!((mab / (ma + mb) - 1.0).abs() < 0.05);
    }

    #[test]
    fn mass_identity_and_monotonicity() {
        let p = translation_invariant();
        let delta = 1.0 / 16.0;
        let fam = build_family(&p, &FamilySpec::new(delta, 0.07, AnchorRule::Random { seed: 1 })).unwrap();
        let h = delta / 4.0;
        let r1 = lp_ratio(&fam, 1.0, h).unwrap();
        assert!((r1 - 1.0).abs() < 0.05, "{r1}");
        let mut prev = 0.0;
        for k in 1..=fam.tubes.len() {
            let m = union_measure(&fam.subset(&(0..k).collect::<Vec<_>>()), h).unwrap();
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn high_p_tracks_max() {
        let p = with_eps0(translation_invariant(), rat(1, 2));
        let delta = 1.0 / 16.0;
        let fam = build_family(&p, &FamilySpec::new(delta, 0.07, AnchorRule::Fixed { anchor: vec![0.0, 0.0] })).unwrap();
        let hist = count_histogram(&fam, delta / 4.0).unwrap();
        let norm = hist.lp_norm(64.0);
        let top = hist.max() as f64;
        let cells_at_max = hist.cells_by_count[&hist.max()] as f64;
        let lower = top * (cells_at_max * hist.cell_volume()).powf(1.0 / 64.0);
        assert!(norm >= lower && norm <= top * (hist.occupied() as f64 * hist.cell_volume()).powf(1.0 / 64.0));
        assert!(norm / top > 0.8 && norm / top < 1.0);
    }

    #[test]
    fn scan_needs_three_deltas() {
        let p = translation_invariant();
        let r = compression_scan(&p, &[0.1, 0.05], &ScanConfig::default());
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        let r = compression_scan(&p, &[0.1, 0.1, 0.1, 0.05], &ScanConfig::default());
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn unit_balls() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-15);
        assert_eq!(maximal_exponent(3, 1.0), 0.0);
        assert!((maximal_exponent(3, 15.0 / 8.0) - 0.4).abs() < 1e-15);
    }
}
