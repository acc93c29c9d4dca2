//! Small dense linear algebra: vectors as slices, a column-major matrix, and
//! a one-sided Jacobi SVD.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Euclidean inner product.
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm<S: Real>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// `a - b` elementwise.
pub fn sub<S: Real>(a: &[S], b: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// `a + b` elementwise.
pub fn add<S: Real>(a: &[S], b: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// `s * a` elementwise.
pub fn scale<S: Real>(s: S, a: &[S]) -> Vec<S> {
    a.iter().map(|&x| s * x).collect()
}

/// `y += s * x` in place.
pub fn axpy<S: Real>(s: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + s * xi;
    }
}

/// `||a - b||_2`.
pub fn dist<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<S>()
        .sqrt()
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_columns(columns: &[Vec<S>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map(|c| c.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            if c.len() != rows {
                return Err(Error::Shape(format!(
                    "column length {} != {}",
                    c.len(),
                    rows
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[c * self.rows + r]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[c * self.rows + r] = v;
    }

    pub fn column(&self, c: usize) -> &[S] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [S] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks(self.rows.max(1))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for c in 0..other.cols {
            for k in 0..self.cols {
                let v = other.get(k, c);
                if v != S::zero() {
                    let col = &self.data[k * self.rows..(k + 1) * self.rows];
                    axpy(v, col, out.column_mut(c));
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> S {
        norm(&self.data)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }
}

/// Thin singular value decomposition `A = U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct Svd<S> {
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: Matrix<S>,
    /// Singular values, nonnegative and nonincreasing.
    pub sigma: Vec<S>,
    /// `cols x k` with orthonormal columns.
    pub v: Matrix<S>,
}

impl<S: Real> Svd<S> {
    /// Rank-r truncation `U_r diag(sigma_r) V_r^T` as a `rows x cols` matrix.
    pub fn truncated(&self, r: usize) -> Matrix<S> {
        let r = r.min(self.sigma.len());
        let mut out = Matrix::zeros(self.u.rows(), self.v.rows());
        for k in 0..r {
            let s = self.sigma[k];
            for c in 0..self.v.rows() {
                let w = s * self.v.get(c, k);
                axpy(w, self.u.column(k), out.column_mut(c));
            }
        }
        out
    }
}

/// One-sided Jacobi SVD.
///
/// Columns of the (tall) working matrix are orthogonalized pairwise by plane
/// rotations which are accumulated into `V`; singular values are the final
/// column norms. For wide inputs the transpose is decomposed and the factors
/// swapped.
pub fn svd<S: Real>(a: &Matrix<S>) -> Result<Svd<S>> {
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "svd" });
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    let n = a.cols;
    let mut work = a.clone();
    let mut v = Matrix::identity(n);
    let eps = S::epsilon() * S::c(64.0);
    let max_sweeps = 60;

    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let (alpha, beta, gamma) = {
                    let ci = work.column(i);
                    let cj = work.column(j);
                    (dot(ci, ci), dot(cj, cj), dot(ci, cj))
                };
                let denom = (alpha * beta).sqrt();
                if denom == S::zero() || gamma.abs() <= eps * denom {
                    continue;
                }
                off = off.max(gamma.abs() / denom);
                // Rutishauser rotation annihilating the (i, j) inner product.
                let zeta = (beta - alpha) / (S::c(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (S::one() + zeta * zeta).sqrt());
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..work.rows {
                    let wi = work.get(r, i);
                    let wj = work.get(r, j);
                    work.set(r, i, c * wi - s * wj);
                    work.set(r, j, s * wi + c * wj);
                }
                for r in 0..n {
                    let vi = v.get(r, i);
                    let vj = v.get(r, j);
                    v.set(r, i, c * vi - s * vj);
                    v.set(r, j, s * vi + c * vj);
                }
            }
        }
        if off <= eps {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<S> = (0..n).map(|c| norm(work.column(c))).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = Matrix::zeros(a.rows, n);
    let mut vv = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let tiny = S::epsilon() * a.frobenius_norm().max(S::one());
    for (k, &c) in order.iter().enumerate() {
        let s = norms[c];
        sigma.push(s);
        if s > tiny {
            let col = scale(S::one() / s, work.column(c));
            u.column_mut(k).copy_from_slice(&col);
        }
        let vcol = v.column(c).to_vec();
        vv.column_mut(k).copy_from_slice(&vcol);
    }
    // Complete U for (numerically) zero singular values so its columns stay
    // orthonormal: Gram-Schmidt of standard basis vectors against the rest.
    for k in 0..n {
        if sigma[k] > tiny {
            continue;
        }
        let mut cand = vec![S::zero(); a.rows];
        'basis: for e in 0..a.rows {
            cand.iter_mut().for_each(|x| *x = S::zero());
            cand[e] = S::one();
            for kk in 0..n {
                if kk == k {
                    continue;
                }
                let proj = dot(&cand, u.column(kk));
                let other = u.column(kk).to_vec();
                axpy(-proj, &other, &mut cand);
            }
            let nrm = norm(&cand);
            if nrm > S::c(0.5) {
                cand = scale(S::one() / nrm, &cand);
                break 'basis;
            }
        }
        u.column_mut(k).copy_from_slice(&cand);
    }

    Ok(Svd { u, sigma, v: vv })
}
