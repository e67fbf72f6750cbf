//! Gauss–Legendre quadrature with node doubling.

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Nodes and weights on `[-1, 1]`, computed by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
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
        if d != 0.0 {
            dp = d;
        }
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
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]`, doubling the node count from 8 until two
/// successive estimates differ by at most `tol`.
pub fn integrate_adaptive<F>(f: F, a: f64, b: f64, tol: f64, max_nodes: usize) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    let estimate = |n: usize| -> C64 {
        let (x, w) = gauss_legendre(n);
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        x.iter()
            .zip(&w)
            .map(|(&xi, &wi)| f(mid + half * xi) * wi)
            .sum::<C64>()
            * half
    };
    let mut n = 8;
    let mut prev = estimate(n);
    let mut change = f64::INFINITY;
    while n * 2 <= max_nodes {
        n *= 2;
        let next = estimate(n);
        change = (next - prev).norm();
        if change <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNotConverged { change })
}
