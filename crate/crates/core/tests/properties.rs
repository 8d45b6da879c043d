use kakeya_core::contact::{build_contact_matrix, contact_order, random_perturbation, rank_prefix, DEFAULT_RANK_TOL};
use kakeya_core::io::to_float_phase;
use kakeya_core::jet::{solve_implicit, ImplicitOptions};
use kakeya_core::linalg::{LinAlg, Mat};
use kakeya_core::phase::hessian_along_curve;
use kakeya_core::quadrature::gauss_legendre;
use kakeya_core::rng::{dyadic, trial_rng};
use kakeya_core::scalar::{rat, rat_int};
use kakeya_core::wolff::{det_expansion, identity_holds};
use kakeya_core::{ExactJet, ExactPhase, FloatJet, Jet, MultiIndex, Rational};
use proptest::prelude::*;

const VARS: usize = 3;
const ORDER: u32 = 4;

fn exps() -> impl Strategy<Value = Vec<u32>> {
    proptest::collection::vec(0u32..=2, VARS)
}

fn jet() -> impl Strategy<Value = ExactJet> {
    proptest::collection::vec((exps(), -6i64..=6, 1i64..=4), 0..6).prop_map(|terms| {
        let terms = terms.into_iter().map(|(e, p, q)| (MultiIndex::new(e), rat(p, q)));
        Jet::from_terms(VARS, ORDER, terms).unwrap().truncate(ORDER)
    })
}

fn one() -> ExactJet {
    Jet::constant(VARS, ORDER, rat_int(1))
}

fn max_coeff_gap(a: &FloatJet, b: &FloatJet) -> f64 {
    let diff = a.checked_sub(b).unwrap();
    diff.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_axioms(a in jet(), b in jet(), c in jet()) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!(&one() * &a, a.clone());
        prop_assert!((&a - &a).is_zero());
    }

    #[test]
    fn derivatives_commute(a in jet(), i in 0..VARS, j in 0..VARS) {
        prop_assert_eq!(a.diff(i).unwrap().diff(j).unwrap(), a.diff(j).unwrap().diff(i).unwrap());
    }

    #[test]
    fn product_rule(a in jet(), b in jet(), i in 0..VARS) {
        // Truncation loses the top degree of d(ab), so compare one order down.
        let lhs = (&a * &b).diff(i).unwrap().truncate(ORDER - 1);
        let rhs = (&(&a.diff(i).unwrap() * &b) + &(&a * &b.diff(i).unwrap())).truncate(ORDER - 1);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn float_tracks_exact(a in jet(), b in jet()) {
        let exact = (&a * &b).to_float();
        let float = &a.to_float() * &b.to_float();
        prop_assert!(max_coeff_gap(&exact, &float) <= 1e-9);
    }

    #[test]
    fn implicit_residual_vanishes(c in proptest::collection::vec(-4i64..=4, 4)) {
        // F(u, s1, s2) = u - s1 + c0 u^2 + c1 u s2 + c2 s1 s2 + c3 u^3
        let t = |e: [u32; 3], v: i64| (MultiIndex::new(e.to_vec()), rat_int(v));
        let f = Jet::from_terms(3, 5, [
            t([1, 0, 0], 1), t([0, 1, 0], -1), t([2, 0, 0], c[0]), t([1, 0, 1], c[1]), t([0, 1, 1], c[2]), t([3, 0, 0], c[3]),
        ]).unwrap();
        let u = solve_implicit(&[f.clone()], 5, ImplicitOptions::default()).unwrap();
        let inner = [u[0].clone(), Jet::variable(2, 5, 0), Jet::variable(2, 5, 1)];
        prop_assert!(f.compose(&inner).unwrap().truncate(5).is_zero());
    }

    #[test]
    fn rank_ignores_row_and_column_order(
        rows in proptest::collection::vec(proptest::collection::vec(-3i64..=3, 5), 4),
        shift in 0usize..4,
    ) {
        let m = Mat::from_rows(rows.iter().map(|r| r.iter().map(|&v| rat_int(v)).collect()).collect());
        let n = m.nrows();
        let permuted = Mat::from_fn(n, m.ncols(), |i, j| m[((i + shift) % n, m.ncols() - 1 - j)].clone());
        prop_assert_eq!(Rational::rank(&m, 0.0).rank, Rational::rank(&permuted, 0.0).rank);
        let fm = m.map(|v| kakeya_core::Scalar::to_f64_lossy(v));
        prop_assert_eq!(f64::rank(&fm, 1e-10).rank, Rational::rank(&m, 0.0).rank);
    }
}

#[test]
fn gauss_legendre_orthogonality() {
    let (x, w) = gauss_legendre(64);
    let legendre = |k: usize, t: f64| {
        let (mut p0, mut p1) = (1.0, t);
        if k == 0 {
            return p0;
        }
        for j in 1..k {
            let p2 = ((2 * j + 1) as f64 * t * p1 - j as f64 * p0) / (j + 1) as f64;
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    for i in 0..=20 {
        for j in 0..=20 {
            let q: f64 = x.iter().zip(&w).map(|(&t, &wt)| wt * legendre(i, t) * legendre(j, t)).sum();
            let want = if i == j { 2.0 / (2 * i + 1) as f64 } else { 0.0 };
            assert!((q - want).abs() < 1e-13, "<P{i}, P{j}> = {q}");
        }
    }
}

fn q_term(order: u32) -> ExactPhase {
    let y = |e: [u32; 3], c: i64| (vec![0, 0, e[0], e[1], e[2]], rat_int(c));
    ExactPhase::x_dot_y_plus(3, order, &[y([1, 2, 0], 1), y([1, 0, 2], 1), y([2, 2, 0], 1), y([3, 1, 1], 1), y([4, 0, 2], 1)])
        .unwrap()
}

#[test]
fn expansion_identity_on_random_instances() {
    for k in 0..50u64 {
        let mut rng = trial_rng(5, k);
        let (n, l) = if k % 2 == 0 { (3, 5) } else { (4, 4) };
        let base = if n == 3 { q_term(l + 2) } else { ExactPhase::standard(4, l + 2).unwrap() };
        let p = base.perturbed(&random_perturbation(n, base.order(), 3, &rat(1, 2), &mut rng)).unwrap();
        let hc = hessian_along_curve(&p, &p.origin_point(), l).unwrap();
        let u = Mat::from_fn(n - 1, n - 1, |_, _| dyadic(&mut rng, &rat_int(2)));
        assert!(identity_holds(&hc, &det_expansion(&hc, &u).unwrap()), "instance {k}");
    }
}

#[test]
fn contact_order_is_invariant_under_relabelling_y() {
    for k in 0..10u64 {
        let mut rng = trial_rng(17, k);
        let base = ExactPhase::standard(4, 9).unwrap();
        let p = base.perturbed(&random_perturbation(4, 9, 4, &rat(1, 4), &mut rng)).unwrap();
        let q = p.permute_y(&[2, 0, 1]).unwrap();
        let a = contact_order(&p, &p.origin_point(), 7, DEFAULT_RANK_TOL).unwrap();
        let b = contact_order(&q, &q.origin_point(), 7, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(a.rank_at_lmax, b.rank_at_lmax, "trial {k}");
        assert_eq!(a.contact_order, b.contact_order, "trial {k}");
    }
}

#[test]
fn float_backend_matches_exact_rank() {
    let p = q_term(8);
    let f = to_float_phase(&p);
    let exact = build_contact_matrix(&hessian_along_curve(&p, &p.origin_point(), 6).unwrap(), 6).unwrap();
    let float = build_contact_matrix(&hessian_along_curve(&f, &f.origin_point(), 6).unwrap(), 6).unwrap();
    for l in 1..=6 {
        assert_eq!(rank_prefix(&exact, l, 0.0).rank, rank_prefix(&float, l, DEFAULT_RANK_TOL).rank, "l = {l}");
    }
    for (re, rf) in exact.to_mat().to_rows().iter().zip(float.to_mat().to_rows()) {
        for (a, b) in re.iter().zip(rf) {
            assert!((kakeya_core::Scalar::to_f64_lossy(a) - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
