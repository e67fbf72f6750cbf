//! Small dense and sparse linear-algebra helpers on top of `faer`.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Row-compressed complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, C64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or(ZERO)
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        self.matvec(x, &mut y);
        y
    }

    /// `⟨x|A|y⟩`.
    pub fn sandwich(&self, x: &[C64], y: &[C64]) -> C64 {
        let mut acc = ZERO;
        for (i, xi) in x.iter().enumerate() {
            let mut row = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * y[self.cols[k]];
            }
            acc += xi.conj() * row;
        }
        acc
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Largest absolute row sum, an upper bound on the spectral norm of a Hermitian matrix.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from Hermiticity.
    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_real(&self) -> bool {
        self.vals.iter().all(|v| v.im == 0.0)
    }
}

/// Eigen-decomposition `A = V diag(E) V†` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<C64>,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Coefficients `V† x`.
    pub fn project(&self, x: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut out = vec![ZERO; n];
        for (k, o) in out.iter_mut().enumerate() {
            let col = self.vectors.col(k);
            let mut acc = ZERO;
            for i in 0..n {
                acc += col[i].conj() * x[i];
            }
            *o = acc;
        }
        out
    }

    /// `V c`.
    pub fn reconstruct(&self, coeffs: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut out = vec![ZERO; n];
        for (k, &c) in coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let col = self.vectors.col(k);
            for i in 0..n {
                out[i] += col[i] * c;
            }
        }
        out
    }
}

/// Dense Hermitian eigensolver. Uses a real symmetric solver when every entry is real.
pub fn hermitian_eigen(a: &Mat<C64>) -> Result<HermitianEigen> {
    let n = a.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: Mat::zeros(0, 0),
        });
    }
    let real = (0..n).all(|j| (0..n).all(|i| a[(i, j)].im == 0.0));
    if real {
        let r = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)].re);
        let eig = r
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenFailed)?;
        let s = eig.S();
        let u = eig.U();
        let values = (0..n).map(|i| s[i]).collect();
        let vectors = Mat::<C64>::from_fn(n, n, |i, j| C64::new(u[(i, j)], 0.0));
        Ok(HermitianEigen { values, vectors })
    } else {
        let eig = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenFailed)?;
        let s = eig.S();
        let values = (0..n).map(|i| s[i].re).collect();
        Ok(HermitianEigen {
            values,
            vectors: eig.U().to_owned(),
        })
    }
}

/// `exp(−i A t)` for a dense Hermitian matrix.
pub fn unitary_propagator(a: &Mat<C64>, t: f64) -> Result<Mat<C64>> {
    let eig = hermitian_eigen(a)?;
    let n = a.nrows();
    let phases: Vec<C64> = eig.values.iter().map(|&e| (-I * e * t).exp()).collect();
    Ok(Mat::from_fn(n, n, |i, j| {
        let mut acc = ZERO;
        for k in 0..n {
            acc += eig.vectors[(i, k)] * phases[k] * eig.vectors[(j, k)].conj();
        }
        acc
    }))
}

pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius norm of `A − B`.
pub fn dense_distance(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += (a[(i, j)] - b[(i, j)]).norm_sqr();
        }
    }
    acc.sqrt()
}
