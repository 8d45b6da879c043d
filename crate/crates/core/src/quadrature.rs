//! Gauss-Legendre quadrature and exact-up-to-rounding integrals of `|P|` for
//! real polynomials `P`.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, by Newton
/// iteration on the Legendre polynomial from Chebyshev initial guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Number of nodes of the default rule.
pub const GL_NODES: usize = 64;

fn gl64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_NODES))
}

/// `sum_k c[k] x^k` by Horner.
pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Integral of a smooth function over `[a, b]` with the 64-point rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = gl64();
    let (m, r) = ((a + b) / 2.0, (b - a) / 2.0);
    x.iter().zip(w).map(|(&xi, &wi)| wi * f(m + r * xi)).sum::<f64>() * r
}

/// Real roots of a polynomial in `(a, b)`, located by sign changes on a
/// uniform sample and refined by bisection. Roots of even multiplicity do
/// not need splitting since `|P|` is smooth there.
pub fn sign_changes(c: &[f64], a: f64, b: f64, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let step = (b - a) / samples as f64;
    let mut x0 = a;
    let mut f0 = poly_eval(c, x0);
    for i in 1..=samples {
        let x1 = if i == samples { b } else { a + step * i as f64 };
        let f1 = poly_eval(c, x1);
        if f0 == 0.0 && x0 > a {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = poly_eval(c, mid);
                if fm == 0.0 || hi - lo <= f64::EPSILON * mid.abs().max(1e-300) {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// `int_a^b |P(x)| dx` for a polynomial of degree below 128, exact up to
/// rounding: `|P|` is a polynomial on each piece between sign changes.
pub fn integrate_abs_poly(c: &[f64], a: f64, b: f64) -> f64 {
    let deg = c.iter().rposition(|&v| v != 0.0).unwrap_or(0);
    assert!(deg < 2 * GL_NODES, "polynomial degree {deg} too high for the quadrature rule");
    let mut cuts = vec![a];
    cuts.extend(sign_changes(c, a, b, 4 * deg.max(1) + 256));
    cuts.push(b);
    cuts.windows(2).map(|w| integrate(|x| poly_eval(c, x).abs(), w[0], w[1])).sum()
}
