//! Dense symmetric-matrix kernels.
//!
//! Everything here is row-major and dense; the solvers in this crate work
//! with orders up to a few hundred, where a straightforward triple loop with
//! contiguous inner products is fast enough and keeps the numerics obvious.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{MespError, Result};

/// Relative pivot threshold for the Cholesky positive-definiteness test.
pub const PIVOT_TOL: f64 = 1e-12;

/// Asymmetry tolerated on construction before the input is rejected.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// General dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(MespError::DimensionMismatch { expected: c, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(MespError::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Symmetric dense matrix. Symmetry is exact: both triangles are stored and
/// every constructor symmetrizes.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = SymMatrix::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds from a generator evaluated on the lower triangle only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Symmetrizes `(M + M')/2`; rejects asymmetry above [`SYMMETRY_TOL`]
    /// (relative to the largest entry).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        SymMatrix::from_matrix(&m)
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(MespError::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        let n = m.rows();
        let scale = m.max_abs().max(1.0);
        for i in 0..n {
            for j in 0..i {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > SYMMETRY_TOL * scale || !gap.is_finite() {
                    return Err(MespError::AsymmetricBeyondTol { i, j, gap });
                }
            }
        }
        Ok(SymMatrix::from_fn(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    /// Symmetrizes without any tolerance check.
    pub fn symmetrize(m: &Matrix) -> Self {
        SymMatrix::from_fn(m.rows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Sets entry `(i, j)` and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.n + i]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix { rows: self.n, cols: self.n, data: self.data.clone() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_diag(&self) -> f64 {
        self.diag().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scale(&self, a: f64) -> SymMatrix {
        SymMatrix { n: self.n, data: self.data.iter().map(|v| a * v).collect() }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_same(self.n, other.n)?;
        Ok(SymMatrix { n: self.n, data: zip_map(&self.data, &other.data, |a, b| a + b) })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_same(self.n, other.n)?;
        Ok(SymMatrix { n: self.n, data: zip_map(&self.data, &other.data, |a, b| a - b) })
    }

    /// `self + a * other`, in place.
    pub fn axpy(&mut self, a: f64, other: &SymMatrix) {
        debug_assert_eq!(self.n, other.n);
        axpy(a, &other.data, &mut self.data);
    }

    pub fn add_diag(&mut self, d: &[f64]) {
        for (i, v) in d.iter().enumerate() {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &SymMatrix) -> Result<Matrix> {
        check_same(self.n, other.n)?;
        self.to_matrix().matmul(&other.to_matrix())
    }

    /// `v' M v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// Principal submatrix on the given indices, in the given order.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_fn(idx.len(), |a, b| self[(idx[a], idx[b])])
    }

    /// `D M D` for diagonal `D = diag(d)`.
    pub fn scale_sym(&self, d: &[f64]) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| d[i] * self[(i, j)] * d[j])
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymMatrix n={} [", self.n)?;
        for i in 0..self.n {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

fn check_same(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(MespError::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Elementwise product `A ∘ B`.
pub fn hadamard(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    check_same(a.n, b.n)?;
    Ok(SymMatrix { n: a.n, data: zip_map(&a.data, &b.data, |x, y| x * y) })
}

/// `A • B = Trace(A B')`.
pub fn trace_dot(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_same(a.n, b.n)?;
    Ok(dot(&a.data, &b.data))
}

/// Lower-triangular Cholesky factor, `L L' = M`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &SymMatrix) -> Result<Self> {
        let n = m.n;
        let max_diag = m.max_diag();
        if n == 0 {
            return Ok(Cholesky { n, l: Vec::new() });
        }
        if !(max_diag > 0.0) {
            return Err(MespError::NotPositiveDefinite { row: 0, pivot: max_diag });
        }
        let tol = PIVOT_TOL * max_diag;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let d = m[(j, j)] - dot(&l[j * n..j * n + j], &l[j * n..j * n + j]);
            if !(d > tol) {
                return Err(MespError::NotPositiveDefinite { row: j, pivot: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let v = (m[(i, j)] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j])) / djj;
                l[i * n + j] = v;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factor_matrix(&self) -> Matrix {
        Matrix { rows: self.n, cols: self.n, data: self.l.clone() }
    }

    /// `2 Σ log L_ii`
    pub fn ldet(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
    }

    /// Solves `L' x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut acc = b[i];
            for k in i + 1..n {
                acc -= self.l[k * n + i] * b[k];
            }
            b[i] = acc / self.l[i * n + i];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    pub fn solve_mat(&self, b: &Matrix) -> Result<Matrix> {
        check_same(self.n, b.rows())?;
        let bt = b.transpose();
        let mut out = Matrix::zeros(bt.rows(), bt.cols());
        for k in 0..bt.rows() {
            let x = self.solve_vec(bt.row(k));
            out.row_mut(k).copy_from_slice(&x);
        }
        Ok(out.transpose())
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.n;
        // L^{-1} rows, then inv = L^{-T} L^{-1}
        let mut linv = Matrix::zeros(n, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            self.forward(&mut e);
            // column k of L^{-1}
            for i in 0..n {
                linv.set(i, k, e[i]);
            }
        }
        let lt = linv.transpose();
        // inv_ij = sum_k linv_ki linv_kj
        SymMatrix::from_fn(n, |i, j| dot(lt.row(i), lt.row(j)))
    }

    /// `L^{-1} A L^{-T}`, the congruence that maps `F^{-1} • A` to a trace.
    pub fn whiten(&self, a: &SymMatrix) -> SymMatrix {
        let n = self.n;
        // W = L^{-1} A  (column-wise forward solves on rows of A, A symmetric)
        let mut w = Matrix::zeros(n, n);
        for j in 0..n {
            let mut col = a.row(j).to_vec(); // column j of A
            self.forward(&mut col);
            for i in 0..n {
                w.set(j, i, col[i]); // store (L^{-1}A)' so rows are columns
            }
        }
        // w now holds (L^{-1} A)' = A L^{-T}; rows of w are columns of L^{-1}A.
        // L^{-1} (L^{-1} A)' : forward-solve each column of (L^{-1}A)'.
        let mut out = SymMatrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = w[(i, j)];
            }
            self.forward(&mut col);
            for i in 0..n {
                out.data[i * n + j] = col[i];
            }
        }
        let raw = out.to_matrix();
        SymMatrix::symmetrize(&raw)
    }
}

pub fn cholesky(m: &SymMatrix) -> Result<Matrix> {
    Cholesky::factor(m).map(|c| c.factor_matrix())
}

pub fn ldet(m: &SymMatrix) -> Result<f64> {
    Cholesky::factor(m).map(|c| c.ldet())
}

pub fn solve(m: &SymMatrix, b: &Matrix) -> Result<Matrix> {
    Cholesky::factor(m)?.solve_mat(b)
}

pub fn inverse(m: &SymMatrix) -> Result<SymMatrix> {
    Cholesky::factor(m).map(|c| c.inverse())
}

/// Eigenvalues (ascending) and eigenvectors (columns of the returned matrix)
/// by cyclic Jacobi rotations.
pub fn sym_eigen(m: &SymMatrix) -> (Vec<f64>, Matrix) {
    let n = m.n;
    let mut a = m.to_matrix().data;
    let mut v = Matrix::identity(n).data;
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let vals = order.iter().map(|&i| a[i * n + i]).collect();
    let vecs = Matrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    (vals, vecs)
}

pub fn eigenvalues(m: &SymMatrix) -> Vec<f64> {
    sym_eigen(m).0
}

pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis (columns) of the orthogonal complement of the row space
/// of `a` (`r x p`), computed with modified Gram-Schmidt on the rows followed
/// by Householder completion. Rows dependent to within `tol` are dropped.
pub fn null_space(a: &Matrix, tol: f64) -> Matrix {
    let p = a.cols();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..a.rows() {
        let mut v = a.row(i).to_vec();
        let nrm0 = norm2(&v);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let nrm = norm2(&v);
        if nrm > tol * nrm0.max(1.0) {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
        }
    }
    let r = basis.len();
    // Householder QR of the p x r matrix with orthonormal columns `basis`;
    // trailing p - r columns of Q span the complement.
    let mut work = Matrix::from_fn(p, r, |i, j| basis[j][i]);
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let mut x: Vec<f64> = (k..p).map(|i| work[(i, k)]).collect();
        let alpha = -x[0].signum() * norm2(&x);
        let alpha = if alpha == 0.0 { -norm2(&x) } else { alpha };
        x[0] -= alpha;
        let vn = norm2(&x);
        if vn > 0.0 {
            x.iter_mut().for_each(|t| *t /= vn);
        }
        for j in k..r {
            let col: Vec<f64> = (k..p).map(|i| work[(i, j)]).collect();
            let c = 2.0 * dot(&x, &col);
            for (off, i) in (k..p).enumerate() {
                let val = work[(i, j)] - c * x[off];
                work.set(i, j, val);
            }
        }
        reflectors.push(x);
    }
    let mut q = Matrix::zeros(p, p - r);
    for j in 0..p - r {
        let mut e = vec![0.0; p];
        e[r + j] = 1.0;
        for k in (0..r).rev() {
            let h = &reflectors[k];
            let c = 2.0 * dot(h, &e[k..]);
            axpy(-c, h, &mut e[k..]);
        }
        for i in 0..p {
            q.set(i, j, e[i]);
        }
    }
    q
}

/// Orthonormalizes the columns of a square matrix (Gram-Schmidt, two passes)
/// and returns `Q`. Used for random orthogonal matrices.
pub fn orthonormalize_columns(a: &Matrix) -> Matrix {
    let n = a.rows();
    let at = a.transpose();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(at.rows());
    for j in 0..at.rows() {
        let mut v = at.row(j).to_vec();
        for _ in 0..2 {
            for b in &cols {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let nrm = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nrm);
        cols.push(v);
    }
    Matrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}
