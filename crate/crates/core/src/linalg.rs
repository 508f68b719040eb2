//! Small dense linear algebra: determinants, adjugates, singular value
//! decomposition and least squares. Sizes here are tiny (a handful of
//! derivations or coordinates) so everything is row-major `Vec<f64>`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| crate::math::dot(self.row(i), v)).collect()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// Submatrix keeping the listed rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        crate::math::norm(&self.data)
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        if n == 0 {
            return 1.0;
        }
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[i * n + k].abs() > a[p * n + k].abs() {
                    p = i;
                }
            }
            let pivot = a[p * n + k];
            if pivot == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            det *= pivot;
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        det
    }

    /// Classical adjugate, built from signed cofactor determinants:
    /// `adj(A)[i][j] = (-1)^(i+j) det(A with row j and column i removed)`.
    /// It satisfies `adj(A) · A = A · adj(A) = det(A) · I`.
    pub fn adjugate(&self) -> Matrix {
        assert_eq!(self.rows, self.cols, "adjugate of a non-square matrix");
        let n = self.rows;
        let mut adj = Matrix::zeros(n, n);
        if n == 1 {
            adj[(0, 0)] = 1.0;
            return adj;
        }
        for i in 0..n {
            for j in 0..n {
                let keep_rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
                let keep_cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
                let minor = self.select(&keep_rows, &keep_cols).det();
                adj[(i, j)] = if (i + j) % 2 == 0 { minor } else { -minor };
            }
        }
        adj
    }

    /// Solves `self · x = b` for square, nonsingular `self`.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(b.len(), self.rows);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[i * n + k].abs() > a[p * n + k].abs() {
                    p = i;
                }
            }
            if a[p * n + k] == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                x.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f != 0.0 {
                    for j in k..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                    x[i] -= f * x[k];
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s -= a[k * n + j] * x[j];
            }
            x[k] = s / a[k * n + k];
        }
        if x.iter().all(|v| v.is_finite()) {
            Some(x)
        } else {
            None
        }
    }

    /// Thin singular value decomposition `self = U · diag(σ) · Vᵀ` with
    /// singular values sorted in decreasing order.
    pub fn svd(&self) -> Svd {
        if self.rows >= self.cols {
            jacobi_svd(self)
        } else {
            let t = jacobi_svd(&self.transpose());
            Svd { u: t.v, singular_values: t.singular_values, v: t.u }
        }
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.svd().singular_values
    }

    /// Numerical rank: count of σ_k with σ_k > rel_tol · σ_1.
    pub fn rank(&self, rel_tol: f64) -> usize {
        rank_from_singular_values(&self.singular_values(), rel_tol)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn rank_from_singular_values(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&s1) if s1 > 0.0 => sv.iter().filter(|&&s| s > rel_tol * s1).count(),
        _ => 0,
    }
}

#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × k` with orthonormal columns (zero columns for σ = 0).
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    /// Minimum-norm least-squares solution of `A x = b`, discarding singular
    /// values at or below `rel_tol · σ_1`.
    pub fn solve(&self, b: &[f64], rel_tol: f64) -> Vec<f64> {
        let k = self.singular_values.len();
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        let mut x = vec![0.0; self.v.rows()];
        for c in 0..k {
            let s = self.singular_values[c];
            if s <= rel_tol * s1 || s == 0.0 {
                continue;
            }
            let mut ub = 0.0;
            for i in 0..self.u.rows() {
                ub += self.u[(i, c)] * b[i];
            }
            let coef = ub / s;
            for (r, xr) in x.iter_mut().enumerate() {
                *xr += coef * self.v[(r, c)];
            }
        }
        x
    }
}

/// One-sided (Hestenes) Jacobi SVD for `rows ≥ cols`. Accurate for small
/// singular values, which matters when ranks are decided by σ ratios.
fn jacobi_svd(a: &Matrix) -> Svd {
    let m = a.rows();
    let n = a.cols();
    let mut u = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<(f64, usize)> = (0..n)
        .map(|j| (crate::math::norm(&u.column(j)), j))
        .collect();
    sigma.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut uu = Matrix::zeros(m, n);
    let mut vv = Matrix::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    for (c, &(s, j)) in sigma.iter().enumerate() {
        sv.push(s);
        for i in 0..m {
            uu[(i, c)] = if s > 0.0 { u[(i, j)] / s } else { 0.0 };
        }
        for i in 0..n {
            vv[(i, c)] = v[(i, j)];
        }
    }
    Svd { u: uu, singular_values: sv, v: vv }
}

/// Iterates over all `k`-element subsets of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Greedy column pivoting on a `k × n` matrix: picks `k` columns by repeated
/// Gram–Schmidt on the remaining column of largest residual norm.
pub fn pivot_columns(a: &Matrix, k: usize) -> Vec<usize> {
    let n = a.cols();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut chosen = Vec::with_capacity(k);
    let mut used = vec![false; n];
    for _ in 0..k.min(n) {
        let mut best = None;
        let mut best_norm = -1.0;
        for j in 0..n {
            if used[j] {
                continue;
            }
            let nj = crate::math::norm(&cols[j]);
            if nj > best_norm {
                best_norm = nj;
                best = Some(j);
            }
        }
        let Some(p) = best else { break };
        used[p] = true;
        chosen.push(p);
        if best_norm <= 0.0 {
            continue;
        }
        let q: Vec<f64> = cols[p].iter().map(|x| x / best_norm).collect();
        for j in 0..n {
            if used[j] {
                continue;
            }
            let proj = crate::math::dot(&q, &cols[j]);
            for (c, qi) in cols[j].iter_mut().zip(&q) {
                *c -= proj * qi;
            }
        }
    }
    chosen.sort_unstable();
    chosen
}
