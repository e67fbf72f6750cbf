//! Lanczos-based propagation and spectral projections for large sparse Hamiltonians.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, SparseMatrix, C64, I, ZERO};

/// Krylov subspace dimension per propagation step.
pub const KRYLOV_DIM: usize = 30;
/// Absolute error tolerance per propagation step.
pub const KRYLOV_TOL: f64 = 1e-10;

struct Lanczos {
    basis: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Residual norm after the last vector.
    tail: f64,
}

/// Lanczos with full reorthogonalization, stopped after `max_dim` vectors or
/// when the residual drops below `breakdown`.
fn lanczos(h: &SparseMatrix, start: &[C64], max_dim: usize, breakdown: f64) -> Lanczos {
    let n = start.len();
    let s = norm(start);
    let mut basis: Vec<Vec<C64>> = vec![start.iter().map(|v| v / s).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![ZERO; n];
    loop {
        let q = basis.last().unwrap();
        h.matvec(q, &mut w);
        let a = dot(q, &w).re;
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= proj * bi;
                }
            }
        }
        let bnorm = norm(&w);
        if basis.len() >= max_dim || bnorm <= breakdown {
            return Lanczos {
                basis,
                alpha,
                beta,
                tail: bnorm,
            };
        }
        beta.push(bnorm);
        basis.push(w.iter().map(|v| v / bnorm).collect());
    }
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Mat<f64>)> {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = t.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailed)?;
    let s = eig.S();
    Ok(((0..k).map(|i| s[i]).collect(), eig.U().to_owned()))
}

/// `exp(−i H dt) v` with a posteriori error control by step halving.
pub fn propagate(h: &SparseMatrix, v: &[C64], dt: f64) -> Result<Vec<C64>> {
    propagate_depth(h, v, dt, 0)
}

fn propagate_depth(h: &SparseMatrix, v: &[C64], dt: f64, depth: usize) -> Result<Vec<C64>> {
    let s = norm(v);
    if s == 0.0 || dt == 0.0 {
        return Ok(v.to_vec());
    }
    let breakdown = 1e-14 * h.norm_bound().max(1.0);
    let lz = lanczos(h, v, KRYLOV_DIM.min(v.len()), breakdown);
    let (theta, y) = tridiagonal_eigen(&lz.alpha, &lz.beta)?;
    let k = theta.len();
    // coefficients of exp(−iT dt) e_1 in the Lanczos basis
    let mut coeffs = vec![ZERO; k];
    for j in 0..k {
        let phase = (-I * theta[j] * dt).exp() * y[(0, j)];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c += y[(i, j)] * phase;
        }
    }
    let err = lz.tail * coeffs[k - 1].norm() * s;
    if err > KRYLOV_TOL && lz.tail > breakdown {
        if depth >= 40 {
            return Err(Error::KrylovNotConverged { residual: err });
        }
        let half = propagate_depth(h, v, dt / 2.0, depth + 1)?;
        return propagate_depth(h, &half, dt / 2.0, depth + 1);
    }
    let mut out = vec![ZERO; v.len()];
    for (b, &c) in lz.basis.iter().zip(&coeffs) {
        for (o, bi) in out.iter_mut().zip(b) {
            *o += bi * c * s;
        }
    }
    Ok(out)
}

/// Exhaustive Lanczos from `v`: Ritz values with the components of `v` on
/// each Ritz vector, i.e. the spectral projections of `v` on the Krylov space.
pub struct KrylovProjections {
    pub values: Vec<f64>,
    /// `P_j v` for every Ritz pair.
    pub vectors: Vec<Vec<C64>>,
}

pub fn spectral_projections(h: &SparseMatrix, v: &[C64]) -> Result<KrylovProjections> {
    let s = norm(v);
    if s == 0.0 {
        return Ok(KrylovProjections {
            values: vec![],
            vectors: vec![],
        });
    }
    let lz = lanczos(h, v, v.len(), 1e-10 * h.norm_bound().max(1e-300));
    let (theta, y) = tridiagonal_eigen(&lz.alpha, &lz.beta)?;
    let mut vectors = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let weight = y[(0, j)] * s;
        let mut p = vec![ZERO; v.len()];
        for (i, b) in lz.basis.iter().enumerate() {
            let c = y[(i, j)] * weight;
            if c == 0.0 {
                continue;
            }
            for (pi, bi) in p.iter_mut().zip(b) {
                *pi += bi * c;
            }
        }
        vectors.push(p);
    }
    Ok(KrylovProjections {
        values: theta,
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigen, ONE};

    fn chain(n: usize) -> SparseMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, C64::new(0.1 * i as f64, 0.0))];
                if i > 0 {
                    r.push((i - 1, C64::new(-1.0, 0.2)));
                }
                if i + 1 < n {
                    r.push((i + 1, C64::new(-1.0, -0.2)));
                }
                r
            })
            .collect();
        SparseMatrix::from_rows(rows)
    }

    #[test]
    fn propagation_matches_dense() {
        let h = chain(60);
        let mut v = vec![ZERO; 60];
        v[3] = ONE;
        let eig = hermitian_eigen(&h.to_dense()).unwrap();
        let t = 3.7;
        let c = eig.project(&v);
        let ph: Vec<C64> = c
            .iter()
            .zip(&eig.values)
            .map(|(ci, &e)| ci * (-I * e * t).exp())
            .collect();
        let exact = eig.reconstruct(&ph);
        let k = propagate(&h, &v, t).unwrap();
        let err: f64 = exact.iter().zip(&k).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-9, "{err}");
        assert!((norm(&k) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn projections_resolve_the_start_vector() {
        let h = chain(40);
        let mut v = vec![ZERO; 40];
        v[0] = ONE;
        v[7] = C64::new(0.0, 0.5);
        let p = spectral_projections(&h, &v).unwrap();
        let mut sum = vec![ZERO; 40];
        for vec in &p.vectors {
            for (s, x) in sum.iter_mut().zip(vec) {
                *s += x;
            }
        }
        let err: f64 = sum.iter().zip(&v).map(|(a, b)| (a - b).norm()).sum();
        assert!(err < 1e-9);
        for (vec, &e) in p.vectors.iter().zip(&p.values) {
            let hv = h.apply(vec);
            let res: f64 = hv.iter().zip(vec).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-7 * norm(vec).max(1e-3));
        }
    }
}
