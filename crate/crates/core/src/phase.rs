//! Hörmander phases `phi(x, t; y)` stored as jets.
//!
//! Variables are ordered `(x_1..x_{n-1}, t, y_1..y_{n-1})`. The jet is the
//! Taylor polynomial of the phase about `center`; analysis points are given
//! in absolute coordinates and must lie in the `eps0` box around the center.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jet::{solve_implicit, ImplicitOptions, Jet, MultiIndex};
use crate::linalg::{det_ring, symmetric_eigenvalues, LinAlg, Mat};
use crate::scalar::{rat, Rational, Scalar};

/// Default neighbourhood radius.
pub fn default_eps0() -> Rational {
    rat(1, 10)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase<S: Scalar> {
    n: usize,
    jet: Jet<S>,
    center: Vec<S>,
    eps0: S,
}

pub type ExactPhase = Phase<Rational>;
pub type FloatPhase = Phase<f64>;

impl<S: Scalar> Phase<S> {
    pub fn new(n: usize, jet: Jet<S>, center: Vec<S>, eps0: S) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("phase dimension must be >= 3, got {n}")));
        }
        if jet.num_vars() != 2 * n - 1 {
            return Err(Error::VarMismatch(jet.num_vars(), 2 * n - 1));
        }
        if center.len() != 2 * n - 1 {
            return Err(Error::Arity { expected: 2 * n - 1, got: center.len() });
        }
        if !eps0.is_positive() {
            return Err(Error::InvalidParameter("eps0 must be positive".into()));
        }
        Ok(Self { n, jet, center, eps0 })
    }

    /// Phase centred at the origin with the default `eps0`.
    pub fn at_origin(n: usize, jet: Jet<S>) -> Result<Self> {
        let center = vec![S::zero(); 2 * n - 1];
        Self::new(n, jet, center, S::from_rational(&default_eps0()))
    }

    /// `x . y` plus the given extra terms, centred at the origin.
    pub fn x_dot_y_plus(n: usize, order: u32, extra: &[(Vec<u32>, S)]) -> Result<Self> {
        let nv = 2 * n - 1;
        let mut jet = Jet::zero(nv, order);
        for i in 0..n - 1 {
            let mut e = vec![0; nv];
            e[i] = 1;
            e[n + i] = 1;
            jet.insert(MultiIndex::new(e), S::one());
        }
        for (e, c) in extra {
            if e.len() != nv {
                return Err(Error::Arity { expected: nv, got: e.len() });
            }
            jet.insert(MultiIndex::new(e.clone()), c.clone());
        }
        Self::at_origin(n, jet)
    }

    /// `x . y + t <y, A y>`.
    pub fn quadratic(n: usize, order: u32, a: &Mat<S>) -> Result<Self> {
        if a.nrows() != n - 1 || a.ncols() != n - 1 {
            return Err(Error::Arity { expected: n - 1, got: a.nrows() });
        }
        let nv = 2 * n - 1;
        let mut extra = Vec::new();
        for i in 0..n - 1 {
            for j in i..n - 1 {
                let c = if i == j { a[(i, i)].clone() } else { a[(i, j)].clone() + a[(j, i)].clone() };
                let mut e = vec![0; nv];
                e[n - 1] = 1;
                e[n + i] += 1;
                e[n + j] += 1;
                extra.push((e, c));
            }
        }
        Self::x_dot_y_plus(n, order, &extra)
    }

    /// `x . y + t |y|^2`.
    pub fn standard(n: usize, order: u32) -> Result<Self> {
        Self::quadratic(n, order, &Mat::identity(n - 1))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jet(&self) -> &Jet<S> {
        &self.jet
    }

    pub fn order(&self) -> u32 {
        self.jet.order()
    }

    pub fn center(&self) -> &[S] {
        &self.center
    }

    pub fn eps0(&self) -> &S {
        &self.eps0
    }

    pub fn num_vars(&self) -> usize {
        2 * self.n - 1
    }

    pub fn x_var(&self, i: usize) -> usize {
        i
    }

    pub fn t_var(&self) -> usize {
        self.n - 1
    }

    pub fn y_var(&self, j: usize) -> usize {
        self.n + j
    }

    /// The analysis point at the centre.
    pub fn origin_point(&self) -> Vec<S> {
        self.center.clone()
    }

    /// Same phase with its y-variables permuted: `y_j` becomes `y_{perm[j]}`.
    pub fn permute_y(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n;
        if perm.len() != n - 1 {
            return Err(Error::Arity { expected: n - 1, got: perm.len() });
        }
        let mut positions: Vec<usize> = (0..2 * n - 1).collect();
        for (j, &p) in perm.iter().enumerate() {
            positions[n + j] = n + p;
            positions[j] = p;
        }
        let jet = self.jet.embed(2 * n - 1, &positions)?;
        let mut center = self.center.clone();
        for (j, &p) in perm.iter().enumerate() {
            center[n + p] = self.center[n + j].clone();
            center[p] = self.center[j].clone();
        }
        Self::new(n, jet, center, self.eps0.clone())
    }

    /// Adds a polynomial to the phase (same variables and order).
    pub fn perturbed(&self, delta: &Jet<S>) -> Result<Self> {
        let jet = self.jet.checked_add(&delta.with_order(self.jet.order()))?;
        Self::new(self.n, jet, self.center.clone(), self.eps0.clone())
    }

    /// The jet re-centred at `point` (absolute coordinates).
    pub fn local_jet(&self, point: &[S]) -> Result<Jet<S>> {
        self.check_domain(point)?;
        let offset: Vec<S> = point.iter().zip(&self.center).map(|(p, c)| p.clone() - c.clone()).collect();
        self.jet.shift(&offset)
    }

    pub fn check_domain(&self, point: &[S]) -> Result<()> {
        if point.len() != self.num_vars() {
            return Err(Error::Arity { expected: self.num_vars(), got: point.len() });
        }
        let mut worst = S::zero();
        for (p, c) in point.iter().zip(&self.center) {
            let d = (p.clone() - c.clone()).abs();
            if d > worst {
                worst = d;
            }
        }
        if worst > self.eps0 {
            return Err(Error::OutsideDomain(worst.to_f64_lossy()));
        }
        Ok(())
    }

    /// `d^alpha phi` at `point`.
    pub fn derivative(&self, point: &[S], exps: &[u32]) -> Result<S> {
        let local = self.local_jet(point)?;
        Ok(derivative_at_zero(&local, exps))
    }
}

fn derivative_at_zero<S: Scalar>(local: &Jet<S>, exps: &[u32]) -> S {
    let idx = MultiIndex::new(exps.to_vec());
    let fact = S::from_rational(&Rational::from_integer(idx.factorial()));
    local.coeff(&idx) * fact
}

fn unit_sum(nv: usize, vars: &[usize]) -> Vec<u32> {
    let mut e = vec![0; nv];
    for &v in vars {
        e[v] += 1;
    }
    e
}

/// `n x (n-1)` matrix `d_{y_j} grad_{(x,t)} phi` of a local jet.
fn mixed_hessian<S: Scalar>(n: usize, local: &Jet<S>) -> Mat<S> {
    let nv = 2 * n - 1;
    Mat::from_fn(n, n - 1, |a, j| derivative_at_zero(local, &unit_sum(nv, &[a, n + j])))
}

/// Signed maximal minors of an `n x (n-1)` matrix:
/// `G_k = (-1)^(n+k) det(M without row k)` with one-based `k`.
pub fn wedge<S: LinAlg>(m: &Mat<S>) -> Vec<S> {
    let n = m.nrows();
    let cols: Vec<usize> = (0..m.ncols()).collect();
    (0..n)
        .map(|k| {
            let rows: Vec<usize> = (0..n).filter(|&r| r != k).collect();
            let d = S::det(&m.sub_matrix(&rows, &cols));
            if (n + k + 1) % 2 == 0 {
                d
            } else {
                -d
            }
        })
        .collect()
}

/// Result of checking the rank and curvature conditions at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct HormanderReport<S: Scalar> {
    pub h1_rank: usize,
    pub h2_det: S,
    pub h2_eigen_min: f64,
    pub satisfies_h1: bool,
    pub satisfies_h2: bool,
    pub satisfies_h2_plus: bool,
    pub gauss: Vec<S>,
    pub curvature: Mat<S>,
}

/// Relative rank tolerance on float backends.
pub const RANK_TOL: f64 = 1e-8;

pub fn hormander_check<S: LinAlg>(p: &Phase<S>, point: &[S]) -> Result<HormanderReport<S>> {
    if p.order() < 3 {
        return Err(Error::InsufficientOrder { needed: 3, have: p.order() });
    }
    let n = p.n;
    let nv = 2 * n - 1;
    let local = p.local_jet(point)?;
    let mixed = mixed_hessian(n, &local);
    let h1_rank = S::rank(&mixed, RANK_TOL).rank;
    let satisfies_h1 = h1_rank == n - 1;
    let gauss = wedge(&mixed);
    let curvature = Mat::from_fn(n - 1, n - 1, |i, j| {
        (0..n).fold(S::zero(), |acc, a| {
            acc + gauss[a].clone() * derivative_at_zero(&local, &unit_sum(nv, &[a, n + i, n + j]))
        })
    });
    let h2_det = S::det(&curvature);
    let cf = curvature.to_f64();
    let eig = symmetric_eigenvalues(&cf);
    let h2_eigen_min = eig.first().copied().unwrap_or(0.0);
    let (satisfies_h2, definite) = if S::EXACT {
        let pos = leading_minors_positive(&curvature);
        let neg = leading_minors_positive(&curvature.map(|v| -v.clone()));
        (!h2_det.is_zero(), pos || neg)
    } else {
        let scale = cf.amax().max(f64::MIN_POSITIVE);
        let nonsingular = h2_det.to_f64_lossy().abs() > RANK_TOL * scale.powi((n - 1) as i32);
        let tol = RANK_TOL * scale;
        let pos = eig.iter().all(|&e| e > tol);
        let neg = eig.iter().all(|&e| e < -tol);
        (nonsingular, pos || neg)
    };
    Ok(HormanderReport {
        h1_rank,
        h2_det,
        h2_eigen_min,
        satisfies_h1,
        satisfies_h2: satisfies_h1 && satisfies_h2,
        satisfies_h2_plus: satisfies_h1 && satisfies_h2 && definite,
        gauss,
        curvature,
    })
}

fn leading_minors_positive<S: LinAlg>(m: &Mat<S>) -> bool {
    (1..=m.nrows()).all(|k| {
        let idx: Vec<usize> = (0..k).collect();
        S::det(&m.sub_matrix(&idx, &idx)).is_positive()
    })
}

/// Checks the conditions at `point` and at `samples` seeded perturbations of
/// it inside the `eps0` box. This is a finite certification only.
pub fn hormander_check_sampled<S: LinAlg>(
    p: &Phase<S>,
    point: &[S],
    samples: usize,
    seed: u64,
) -> Result<Vec<HormanderReport<S>>> {
    let mut out = vec![hormander_check(p, point)?];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let q: Vec<S> = p
            .center
            .iter()
            .map(|c| {
                // Dyadic offsets in (-eps0, eps0) keep the exact backend exact.
                let k: i64 = rng.random_range(-1023..=1023);
                c.clone() + p.eps0.clone() * S::from_rational(&rat(k, 1024))
            })
            .collect();
        out.push(hormander_check(p, &q)?);
    }
    Ok(out)
}

/// Normal vector to the span of the columns `d_{y_j} grad_{(x,t)} phi`.
pub fn gauss_map<S: LinAlg>(p: &Phase<S>, point: &[S]) -> Result<Vec<S>> {
    let local = p.local_jet(point)?;
    let mixed = mixed_hessian(p.n, &local);
    let g = wedge(&mixed);
    let scale = mixed.max_abs().max(f64::MIN_POSITIVE).powi((p.n - 1) as i32);
    if g.iter().all(|v| v.is_negligible(scale, RANK_TOL)) {
        let rank = S::rank(&mixed, RANK_TOL).rank;
        return Err(Error::RankDeficient { rank, needed: p.n - 1 });
    }
    Ok(g)
}

/// `phi_0(x, t; y) = phi(x + x0, t + t0; y + y0) - phi(x0, t0; y + y0)`,
/// returned as a phase centred at the origin.
pub fn normalize_at<S: Scalar>(p: &Phase<S>, point: &[S]) -> Result<Phase<S>> {
    let n = p.n;
    let local = p.local_jet(point)?;
    let ys: Vec<usize> = (n..2 * n - 1).collect();
    let pure_y = local.restrict(&ys)?.embed(2 * n - 1, &ys)?;
    let jet = local.checked_sub(&pure_y)?;
    Phase::new(n, jet, vec![S::zero(); 2 * n - 1], p.eps0.clone())
}

/// Jets in `(x_1..x_{n-1}, t)` of `d_{y_j} phi(x0 + x, t0 + t; y0)`.
fn grad_y_on_xt<S: Scalar>(n: usize, local: &Jet<S>) -> Result<Vec<Jet<S>>> {
    let xt: Vec<usize> = (0..n).collect();
    (0..n - 1).map(|j| local.diff(n + j)?.restrict(&xt)).collect()
}

/// The curve `X_0(t)` with `grad_y phi(x0 + X_0(t), t0 + t; y0) = grad_y phi(x0, t0; y0)`,
/// as `n - 1` univariate jets of the given order.
pub fn curve_x0<S: LinAlg>(p: &Phase<S>, point: &[S], order: u32) -> Result<Vec<Jet<S>>> {
    if order + 1 > p.order() {
        return Err(Error::InsufficientOrder { needed: order + 1, have: p.order() });
    }
    let local = p.local_jet(point)?;
    let mut f = grad_y_on_xt(p.n, &local)?;
    for fj in &mut f {
        let c = fj.constant_term();
        let nv = fj.num_vars();
        let ord = fj.order();
        *fj = fj.checked_sub(&Jet::constant(nv, ord, c))?;
    }
    solve_implicit(&f, order, ImplicitOptions::default())
}

/// Residual jets of the defining identity of `X_0`; all zero when the curve
/// is correct.
pub fn curve_residual<S: LinAlg>(p: &Phase<S>, point: &[S], curve: &[Jet<S>]) -> Result<Vec<Jet<S>>> {
    let n = p.n;
    let local = p.local_jet(point)?;
    let order = curve.first().map(Jet::order).unwrap_or(0);
    let mut inner: Vec<Jet<S>> = curve.to_vec();
    inner.push(Jet::variable(1, order, 0));
    grad_y_on_xt(n, &local)?
        .iter()
        .map(|g| {
            let c = g.constant_term();
            let v = g.compose(&inner)?;
            v.checked_sub(&Jet::constant(1, v.order(), c))
        })
        .collect()
}

/// Hessian entries `D_ij(t)` along the curve and their determinant.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianCurve<S: Scalar> {
    pub n: usize,
    pub entries: Vec<Vec<Jet<S>>>,
    pub det_jet: Jet<S>,
    pub base_point: Vec<S>,
    /// `d_y^2 phi` at the base point, subtracted from every entry.
    pub reference: Mat<S>,
}

impl<S: Scalar> HessianCurve<S> {
    pub fn dim(&self) -> usize {
        self.n - 1
    }

    pub fn order(&self) -> u32 {
        self.det_jet.order()
    }

    pub fn entry(&self, i: usize, j: usize) -> &Jet<S> {
        &self.entries[i][j]
    }

    /// Product of the entries named by `factors`.
    pub fn product(&self, factors: &[(usize, usize)]) -> Jet<S> {
        factors.iter().fold(Jet::constant(1, self.order(), S::one()), |acc, &(i, j)| &acc * &self.entries[i][j])
    }

    /// `det(U + D(t))` in jet arithmetic.
    pub fn shifted_det(&self, u: &Mat<S>) -> Jet<S> {
        let m = self.dim();
        let ord = self.order();
        let rows: Vec<Vec<Jet<S>>> = (0..m)
            .map(|i| (0..m).map(|j| &self.entries[i][j] + &Jet::constant(1, ord, u[(i, j)].clone())).collect())
            .collect();
        jet_det(&rows, ord)
    }
}

/// Determinant of a square matrix of univariate jets.
pub fn jet_det<S: Scalar>(rows: &[Vec<Jet<S>>], order: u32) -> Jet<S> {
    det_ring(
        rows,
        &Jet::zero(1, order),
        &Jet::constant(1, order, S::one()),
        |a, b| a + b,
        |a, b| a - b,
        |a, b| a * b,
    )
}

pub fn hessian_along_curve<S: LinAlg>(p: &Phase<S>, point: &[S], l_max: u32) -> Result<HessianCurve<S>> {
    if p.order() < l_max + 2 {
        return Err(Error::InsufficientOrder { needed: l_max + 2, have: p.order() });
    }
    let n = p.n;
    let m = n - 1;
    let local = p.local_jet(point)?;
    let curve = curve_x0(p, point, l_max)?;
    let mut inner = curve;
    inner.push(Jet::variable(1, l_max, 0));
    let xt: Vec<usize> = (0..n).collect();
    let mut entries = vec![vec![Jet::zero(1, l_max); m]; m];
    let mut reference = Mat::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let h = local.diff(n + i)?.diff(n + j)?.restrict(&xt)?;
            let along = h.compose(&inner)?.truncate(l_max);
            let c = along.constant_term();
            let d = along.checked_sub(&Jet::constant(1, l_max, c.clone()))?;
            reference[(i, j)] = c.clone();
            reference[(j, i)] = c;
            entries[i][j] = d.clone();
            entries[j][i] = d;
        }
    }
    let det_jet = jet_det(&entries, l_max);
    Ok(HessianCurve { n, entries, det_jet, base_point: point.to_vec(), reference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat_int;

    fn q_term(order: u32) -> ExactPhase {
        // x.y + t(y1^2 + y2^2) + t^2 y1^2 + t^3 y1 y2 + t^4 y2^2
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

    #[test]
    fn standard_phase_conditions() {
        let p = ExactPhase::standard(3, 4).unwrap();
        let r = hormander_check(&p, &p.origin_point()).unwrap();
        assert_eq!(r.h1_rank, 2);
        assert!(r.satisfies_h1 && r.satisfies_h2 && r.satisfies_h2_plus);
        assert_eq!(r.h2_det, rat_int(4));
        assert_eq!(gauss_map(&p, &p.origin_point()).unwrap(), vec![rat_int(0), rat_int(0), rat_int(1)]);
    }

    #[test]
    fn indefinite_curvature() {
        let a = Mat::from_rows(vec![vec![rat_int(1), rat_int(0)], vec![rat_int(0), rat_int(-1)]]);
        let p = ExactPhase::quadratic(3, 4, &a).unwrap();
        let r = hormander_check(&p, &p.origin_point()).unwrap();
        assert!(r.satisfies_h2);
        assert!(!r.satisfies_h2_plus);
        assert!(r.h2_eigen_min < 0.0);
    }

    #[test]
    fn degenerate_phase() {
        let mut jet = Jet::zero(5, 4);
        jet.insert(MultiIndex::new(vec![1, 0, 0, 1, 0]), rat_int(1));
        let p = ExactPhase::at_origin(3, jet).unwrap();
        let r = hormander_check(&p, &p.origin_point()).unwrap();
        assert_eq!(r.h1_rank, 1);
        assert!(!r.satisfies_h1);
        assert!(gauss_map(&p, &p.origin_point()).is_err());
    }

    #[test]
    fn domain_and_order_errors() {
        let p = ExactPhase::standard(3, 2).unwrap();
        assert!(matches!(hormander_check(&p, &p.origin_point()), Err(Error::InsufficientOrder { .. })));
        let p = ExactPhase::standard(3, 4).unwrap();
        let far = vec![rat_int(1), rat_int(0), rat_int(0), rat_int(0), rat_int(0)];
        assert!(matches!(hormander_check(&p, &far), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn curve_for_t_h_phase() {
        // x.y + t (y1 + y1 y2 + y2^2): X0(t) = -t grad h(y0) at y0 = (1/20, 1/20)
        let e = |y1: u32, y2: u32| vec![0, 0, 1, y1, y2];
        let p = ExactPhase::x_dot_y_plus(
            3,
            5,
            &[(e(1, 0), rat_int(1)), (e(1, 1), rat_int(1)), (e(0, 2), rat_int(1))],
        )
        .unwrap();
        let y0 = rat(1, 20);
        let point = vec![rat_int(0), rat_int(0), rat_int(0), y0.clone(), y0.clone()];
        let x0 = curve_x0(&p, &point, 3).unwrap();
        let grad = [rat_int(1) + y0.clone(), y0.clone() + rat_int(2) * y0.clone()];
        for k in 0..2 {
            assert_eq!(x0[k], Jet::from_terms(1, 3, [(MultiIndex::new(vec![1]), -grad[k].clone())]).unwrap());
        }
        for r in curve_residual(&p, &point, &x0).unwrap() {
            assert!(r.is_zero());
        }
    }

    #[test]
    fn quadratic_hessian_curve() {
        let a = Mat::from_rows(vec![vec![rat_int(1), rat_int(2)], vec![rat_int(2), rat_int(-3)]]);
        let p = ExactPhase::quadratic(3, 6, &a).unwrap();
        let hc = hessian_along_curve(&p, &p.origin_point(), 4).unwrap();
        assert_eq!(hc.entry(0, 1).univariate_coeff(1), rat_int(4));
        assert_eq!(hc.entry(1, 1).univariate_coeff(1), rat_int(-6));
        // 2^(n-1) det(A) t^(n-1)
        assert_eq!(hc.det_jet.univariate_coeff(2), rat_int(4 * -7));
        assert_eq!(hc.det_jet.num_terms(), 1);
    }

    #[test]
    fn q_term_entries() {
        let p = q_term(6);
        let hc = hessian_along_curve(&p, &p.origin_point(), 4).unwrap();
        let poly = |c: &[i64]| crate::jet::univariate(4, &c.iter().map(|&v| rat_int(v)).collect::<Vec<_>>());
        assert_eq!(hc.entry(0, 0), &poly(&[0, 2, 2]));
        assert_eq!(hc.entry(0, 1), &poly(&[0, 0, 0, 1]));
        assert_eq!(hc.entry(1, 0), &poly(&[0, 0, 0, 1]));
        assert_eq!(hc.entry(1, 1), &poly(&[0, 2, 0, 0, 2]));
    }

    #[test]
    fn normalization() {
        let p = q_term(6);
        assert_eq!(normalize_at(&p, &p.origin_point()).unwrap(), p);
        let point = vec![rat(1, 50), rat(-1, 40), rat(1, 30), rat(1, 20), rat(-1, 25)];
        let p0 = normalize_at(&p, &point).unwrap();
        for (k, _) in p0.jet().terms() {
            assert!(k.get(0) + k.get(1) + k.get(2) > 0, "pure-y monomial survived: {k:?}");
        }
        let again = normalize_at(&p0, &p0.origin_point()).unwrap();
        assert_eq!(again, p0);
    }

    #[test]
    fn sampled_check_is_seeded() {
        let p = ExactPhase::standard(3, 4).unwrap();
        let a = hormander_check_sampled(&p, &p.origin_point(), 5, 7).unwrap();
        let b = hormander_check_sampled(&p, &p.origin_point(), 5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|r| r.satisfies_h2_plus));
    }

    #[test]
    fn float_backend_matches() {
        let p = q_term(6);
        let jf = p.jet().to_float();
        let pf = FloatPhase::at_origin(3, jf).unwrap();
        let r = hormander_check(&pf, &pf.origin_point()).unwrap();
        assert!(r.satisfies_h2_plus);
        assert!((r.h2_det - 4.0).abs() < 1e-12);
    }
}
