//! Minimal dense linear-algebra kernel.
//!
//! Everything in this crate works with small dense matrices (dimensions of
//! a few). Entries are stored row-major. Linear solves use partial-pivot
//! Gaussian elimination; spectral radii go through a Schur reduction so
//! that complex conjugate eigenvalue pairs (common for closed-loop
//! matrices) are handled correctly.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pivot magnitude below which a linear solve is declared singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    data: Vec<f64>,
}

impl Matrix {
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

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
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

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * s).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dim mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.cols, v.dim(), "matvec dim mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        Vector::new(out)
    }

    /// Outer product `u v^T` as an `u.dim() x v.dim()` matrix.
    pub fn outer(u: &Vector, v: &Vector) -> Matrix {
        let mut m = Matrix::zeros(u.dim(), v.dim());
        for i in 0..u.dim() {
            for j in 0..v.dim() {
                m[(i, j)] = u[i] * v[j];
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::new((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Vector { data: vec![0.0; dim] }
    }

    /// Standard basis vector `e_j` in dimension `dim`.
    pub fn basis(dim: usize, j: usize) -> Self {
        let mut v = Vector::zeros(dim);
        v[j] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim());
        Vector::new(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim());
        Vector::new(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector::new(self.data.iter().map(|a| a * s).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Solves `M X = rhs` by partial-pivot Gaussian elimination.
///
/// `rhs` may have any number of columns. Fails with
/// [`Error::SingularMatrix`] when a pivot falls below [`PIVOT_TOL`].
pub fn solve_linear(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("solve_linear needs a square matrix".into()));
    }
    if m.rows() != rhs.rows() {
        return Err(Error::DimensionMismatch(format!(
            "solve_linear: {} rows vs rhs {} rows",
            m.rows(),
            rhs.rows()
        )));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut x = rhs.clone();
    for col in 0..n {
        // pivot selection
        let mut pivot_row = col;
        let mut pivot_mag = a[(col, col)].abs();
        for r in (col + 1)..n {
            let mag = a[(r, col)].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if pivot_mag < PIVOT_TOL {
            return Err(Error::SingularMatrix(pivot_mag));
        }
        if pivot_row != col {
            for j in 0..n {
                let (p, q) = (a[(col, j)], a[(pivot_row, j)]);
                a[(col, j)] = q;
                a[(pivot_row, j)] = p;
            }
            for j in 0..x.cols() {
                let (p, q) = (x[(col, j)], x[(pivot_row, j)]);
                x[(col, j)] = q;
                x[(pivot_row, j)] = p;
            }
        }
        let pivot = a[(col, col)];
        for r in (col + 1)..n {
            let factor = a[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a[(col, j)];
                a[(r, j)] -= factor * v;
            }
            for j in 0..x.cols() {
                let v = x[(col, j)];
                x[(r, j)] -= factor * v;
            }
        }
    }
    // back substitution
    for col in (0..n).rev() {
        let pivot = a[(col, col)];
        for j in 0..x.cols() {
            let mut acc = x[(col, j)];
            for l in (col + 1)..n {
                acc -= a[(col, l)] * x[(l, j)];
            }
            x[(col, j)] = acc / pivot;
        }
    }
    Ok(x)
}

/// Solves `M x = rhs` for a vector right-hand side.
pub fn solve_linear_vec(m: &Matrix, rhs: &Vector) -> Result<Vector> {
    let col = Matrix::from_vec(rhs.dim(), 1, rhs.entries().to_vec())?;
    let x = solve_linear(m, &col)?;
    Ok(x.column(0))
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Maximum eigenvalue modulus of a square matrix.
///
/// Goes through a real Schur reduction, which resolves complex conjugate
/// pairs (closed-loop matrices `A + BK` routinely have them). Returns
/// [`Error::NonConvergence`] if the QR iteration fails; callers treat
/// that as "unstable".
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("spectral_radius needs a square matrix".into()));
    }
    if m.rows() == 0 || m.max_abs() == 0.0 {
        // the QR iteration does not accept an exactly-zero matrix
        return Ok(0.0);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.to_nalgebra(), 1e-14, SCHUR_MAX_ITER)
        .ok_or(Error::NonConvergence)?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn smallest_eigenvalue_sym(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("symmetric eigenvalues need a square matrix".into()));
    }
    if m.rows() == 0 {
        return Ok(0.0);
    }
    let eig =
        nalgebra::linalg::SymmetricEigen::try_new(m.to_nalgebra(), 1e-14, SCHUR_MAX_ITER)
            .ok_or(Error::NonConvergence)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Lower-triangular Cholesky factor `L` with `L L^T = M`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("cholesky needs a square matrix".into()));
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::NotPositiveDefinite);
                }
                l[(i, j)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Ok(l)
}
