//! Dense row-major `f64` matrices and the two factorizations the pipeline
//! relies on: a cyclic Jacobi symmetric eigensolver and Cholesky.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{self, Parallelism};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("data length {len} does not match {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    Asymmetric { deviation: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },
    #[error("jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense real matrix, row-major, all entries finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = LinalgError;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape { rows, cols, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row slices; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    /// Builds a matrix from a generator. Panics if `f` yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite value at ({i}, {j})");
                data.push(v);
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
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

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// Sub-matrix `self[rows][cols]`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// First `k` columns.
    pub fn leading_cols(&self, k: usize) -> Matrix {
        Matrix::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let par = if n * k * m >= 1 << 18 { Parallelism::Rayon } else { Parallelism::Sequential };
        let rows = parallel::map_range(n, par, |i| {
            let mut out = vec![0.0; m];
            let a = self.row(i);
            for (p, &aip) in a.iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(p)) {
                    *o += aip * b;
                }
            }
            out
        });
        Ok(Matrix { rows: n, cols: m, data: rows.concat() })
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.transpose().matmul(other)
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(LinalgError::Dimension(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Dimension("shape mismatch in add".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut dev = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        dev
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Subtracts `v` from every row.
    pub fn sub_row_vector(&self, v: &[f64]) -> Result<Matrix> {
        if v.len() != self.cols {
            return Err(LinalgError::Dimension(format!(
                "row vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (x, m) in out.row_mut(i).iter_mut().zip(v) {
                *x -= m;
            }
        }
        Ok(out)
    }

    /// `selfᵀ·self`, exactly symmetric.
    pub fn gram_cols(&self) -> Matrix {
        let c = self.cols;
        let mut g = Matrix::zeros(c, c);
        for r in self.row_iter() {
            for i in 0..c {
                let ri = r[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..c {
                    g.data[i * c + j] += ri * r[j];
                }
            }
        }
        for i in 0..c {
            for j in 0..i {
                g.data[i * c + j] = g.data[j * c + i];
            }
        }
        g
    }

    /// `self·selfᵀ`, exactly symmetric.
    pub fn gram_rows(&self) -> Matrix {
        let n = self.rows;
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                g.data[i * n + j] = v;
                g.data[j * n + i] = v;
            }
        }
        g
    }

    fn check_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols });
        }
        Ok(())
    }

    fn check_symmetric(&self) -> Result<()> {
        self.check_square()?;
        let dev = self.max_asymmetry();
        if dev > 1e-9 * self.max_abs() {
            return Err(LinalgError::Asymmetric { deviation: dev });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl SymEigen {
    /// Rebuilds `V·diag(λ)·Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let v = &self.eigenvectors;
        let n = v.rows();
        Matrix::from_fn(n, n, |i, j| {
            (0..self.eigenvalues.len()).map(|k| v[(i, k)] * self.eigenvalues[k] * v[(j, k)]).sum()
        })
    }
}

const MAX_SWEEPS: usize = 100;

/// Full spectrum of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    a.check_symmetric()?;
    let n = a.rows();
    // symmetrise so rotations act on an exactly symmetric matrix
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Matrix::identity(n);

    let total: f64 = m.frobenius_norm();
    if total == 0.0 || n <= 1 {
        return Ok(sorted(m, v));
    }

    let mut sweeps = 0;
    loop {
        let off: f64 = off_diagonal_norm_sq(&m);
        if off <= (f64::EPSILON * total).powi(2) {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // skip rotations that cannot change the diagonal in f64
                if sweeps > 4
                    && app.abs() + 100.0 * apq.abs() == app.abs()
                    && aqq.abs() + 100.0 * apq.abs() == aqq.abs()
                {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s, t);
            }
        }
    }
    Ok(sorted(m, v))
}

fn off_diagonal_norm_sq(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s
}

fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = m.rows();
    let apq = m[(p, q)];
    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn sorted(m: Matrix, v: Matrix) -> SymEigen {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    SymEigen {
        eigenvalues: order.iter().map(|&i| m[(i, i)]).collect(),
        eigenvectors: v.select_cols(&order),
    }
}

/// Lower-triangular `L` with `L·Lᵀ = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    a.check_symmetric()?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { col: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L·x = b` for lower-triangular `L` (forward substitution).
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    check_triangular_system(l, b)?;
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / l[(i, i)];
    }
    Ok(x)
}

/// Solves `U·x = b` for upper-triangular `U` (back substitution).
pub fn solve_upper(u: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    check_triangular_system(u, b)?;
    let n = u.rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| u[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / u[(i, i)];
    }
    Ok(x)
}

fn check_triangular_system(t: &Matrix, b: &[f64]) -> Result<()> {
    t.check_square()?;
    if b.len() != t.rows() {
        return Err(LinalgError::Dimension(format!(
            "rhs of length {} for {}x{} system",
            b.len(),
            t.rows(),
            t.cols()
        )));
    }
    if let Some(i) = (0..t.rows()).find(|&i| t[(i, i)] == 0.0) {
        return Err(LinalgError::Dimension(format!("zero on the diagonal at {i}")));
    }
    Ok(())
}

/// `L⁻¹·B` column by column.
pub fn solve_lower_matrix(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let cols: Vec<Vec<f64>> =
        (0..b.cols()).map(|j| solve_lower(l, &b.column(j))).collect::<Result<_>>()?;
    Ok(Matrix::from_fn(b.rows(), b.cols(), |i, j| cols[j][i]))
}

/// `U⁻¹·B` column by column.
pub fn solve_upper_matrix(u: &Matrix, b: &Matrix) -> Result<Matrix> {
    let cols: Vec<Vec<f64>> =
        (0..b.cols()).map(|j| solve_upper(u, &b.column(j))).collect::<Result<_>>()?;
    Ok(Matrix::from_fn(b.rows(), b.cols(), |i, j| cols[j][i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Power iteration with Hotelling deflation on a shifted matrix so every
    /// eigenvalue becomes positive and is found in descending order.
    fn power_iteration_spectrum(a: &Matrix) -> Vec<f64> {
        let n = a.rows();
        let shift = a.max_abs() * n as f64;
        let mut work = a.add(&Matrix::identity(n).scale(shift)).unwrap();
        let mut out = Vec::new();
        for k in 0..n {
            let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i * 7 + k) as f64 * 0.013).collect();
            let mut lambda = 0.0;
            for _ in 0..200_000 {
                let y = work.mat_vec(&x).unwrap();
                let norm = dot(&y, &y).sqrt();
                let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
                let new_lambda = dot(&next, &work.mat_vec(&next).unwrap());
                let done = (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs()
                    && squared_distance(&next, &x) < 1e-26;
                x = next;
                lambda = new_lambda;
                if done {
                    break;
                }
            }
            out.push(lambda - shift);
            let deflate = Matrix::from_fn(n, n, |i, j| lambda * x[i] * x[j]);
            work = work.add(&deflate.scale(-1.0)).unwrap();
        }
        out
    }

    fn assert_residuals(a: &Matrix, e: &SymEigen) {
        let n = a.rows();
        for k in 0..n {
            let v = e.eigenvectors.column(k);
            let av = a.mat_vec(&v).unwrap();
            let lam = e.eigenvalues[k];
            let res = av.iter().zip(&v).fold(0.0f64, |m, (x, y)| m.max((x - lam * y).abs()));
            assert!(res <= 1e-8 * (1.0 + lam.abs()), "residual {res} for pair {k}");
            for l in 0..n {
                let d = dot(&v, &e.eigenvectors.column(l));
                let expected = if k == l { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identity_spectrum() {
        let e = sym_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert_residuals(&Matrix::identity(3), &e);
    }

    #[test]
    fn diagonal_spectrum() {
        let a = Matrix::from_diag(&[2.0, 5.0, -1.0]);
        let e = sym_eigen(&a).unwrap();
        assert_eq!(e.eigenvalues, vec![5.0, 2.0, -1.0]);
        assert_eq!(e.eigenvectors.column(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(e.eigenvectors.column(1), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.eigenvectors.column(2), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn random_6x6_matches_power_iteration() {
        let a = random_symmetric(6, 7);
        let oracle = power_iteration_spectrum(&a);
        let e = sym_eigen(&a).unwrap();
        for (x, y) in e.eigenvalues.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        assert_residuals(&a, &e);
    }

    #[test]
    fn rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(sym_eigen(&rect), Err(LinalgError::NotSquare { .. })));
        let asym = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigen(&asym), Err(LinalgError::Asymmetric { .. })));
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(Matrix::new(2, 2, vec![1.0]), Err(LinalgError::Shape { .. })));
    }

    #[test]
    fn cholesky_cases() {
        let l = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));

        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(0, 1)], 0.0);
        assert_eq!(l[(1, 0)], 1.0);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);

        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&singular), Err(LinalgError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn triangular_solves() {
        let l = Matrix::from_rows(&[[2.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(solve_lower(&l, &[4.0, 3.0]).unwrap(), vec![2.0, 1.0]);
        let u = l.transpose();
        let x = solve_upper(&u, &[5.0, 1.0]).unwrap();
        assert_eq!(x, vec![2.0, 1.0]);
        assert!(solve_lower(&l, &[1.0]).is_err());
    }

    #[test]
    fn matmul_identity_and_transpose() {
        let a = random_symmetric(5, 1).select_cols(&[0, 1, 2]);
        assert_eq!(a.matmul(&Matrix::identity(3)).unwrap(), a);
        assert_eq!(a.transpose().transpose(), a);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn large_matmul_matches_naive() {
        let a = Matrix::from_fn(80, 70, |i, j| ((i * 31 + j * 17) % 13) as f64 - 6.0);
        let b = Matrix::from_fn(70, 60, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.5);
        let c = a.matmul(&b).unwrap();
        for i in (0..80).step_by(7) {
            for j in (0..60).step_by(5) {
                let s: f64 = (0..70).map(|k| a[(i, k)] * b[(k, j)]).sum();
                assert_eq!(c[(i, j)], s);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn eigen_reconstructs_and_conserves_trace(n in 1usize..12, seed in any::<u64>()) {
            let a = random_symmetric(n, seed);
            let e = sym_eigen(&a).unwrap();
            let rec = e.reconstruct();
            let rel = rec.add(&a.scale(-1.0)).unwrap().frobenius_norm() / a.frobenius_norm().max(1e-300);
            prop_assert!(rel <= 1e-7);
            let tr: f64 = e.eigenvalues.iter().sum();
            prop_assert!((tr - a.trace()).abs() <= 1e-9 * a.trace().abs().max(1.0));
            prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn cholesky_round_trip(n in 2usize..=32, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = b.gram_cols().add(&Matrix::identity(n)).unwrap();
            let l = cholesky(&a).unwrap();
            for i in 0..n {
                for j in (i + 1)..n {
                    prop_assert_eq!(l[(i, j)], 0.0);
                }
            }
            let rec = l.matmul(&l.transpose()).unwrap();
            prop_assert!(rec.max_abs_diff(&a) <= 1e-9 * a.max_abs());
            let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
            let x = solve_lower(&l, &rhs).unwrap();
            let back = l.mat_vec(&x).unwrap();
            let err = back.iter().zip(&rhs).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            prop_assert!(err <= 1e-10 * rhs.iter().fold(1.0f64, |m, v| m.max(v.abs())));
        }
    }
}
