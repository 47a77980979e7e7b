//! Small dense symmetric-matrix utilities: Cholesky factorization, SPD
//! inversion, definiteness margins and block assembly.
//!
//! Everything here targets the tiny dimensions of track fusion (a handful of
//! state components, stacked covariances of a few dozen rows at most), so all
//! algorithms are straightforward O(n³) dense loops.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the matrix layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    /// A factorization hit a non-positive pivot, i.e. the matrix is not
    /// positive definite (within tolerance). Signals a degenerate covariance
    /// that must be regularized upstream.
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    /// Incompatible dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Wire form of [`Matrix`]: explicit dims plus a row-major scalar array.
#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = String;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        if raw.data.len() != raw.rows * raw.cols {
            return Err(format!(
                "matrix payload has {} entries, expected {}x{}",
                raw.data.len(),
                raw.rows,
                raw.cols
            ));
        }
        Ok(Matrix {
            rows: raw.rows,
            cols: raw.cols,
            data: raw.data,
        })
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a fixed-width list of rows; handy in tests.
    pub fn from_rows<const N: usize>(rows: &[[f64; N]]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * N);
        for r in rows {
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols: N,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != rows * cols {
            return Err(MatError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * n + i] = e;
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product dims {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let lhs_row = i * rhs.cols;
                let rhs_row = k * rhs.cols;
                for j in 0..rhs.cols {
                    out.data[lhs_row + j] += a * rhs.data[rhs_row + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(
            self.cols,
            v.len(),
            "matvec dims {}x{} * {}",
            self.rows,
            self.cols,
            v.len()
        );
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix sum dims"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix difference dims"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * c).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn trace(&self) -> f64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    /// (A + Aᵀ)/2.
    pub fn symmetrized(&self) -> Matrix {
        debug_assert!(self.is_square());
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
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

/// Symmetric positive-(semi)definite matrix.
///
/// Construction symmetrizes (A ← (A+Aᵀ)/2) and validates the definiteness
/// margin; downstream code never re-checks symmetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SpdMatrix {
    m: Matrix,
}

impl TryFrom<Matrix> for SpdMatrix {
    type Error = MatError;

    fn try_from(m: Matrix) -> Result<Self, MatError> {
        SpdMatrix::new_psd(m)
    }
}

impl From<SpdMatrix> for Matrix {
    fn from(s: SpdMatrix) -> Matrix {
        s.m
    }
}

impl SpdMatrix {
    /// Positive-semidefinite construction: minimum eigenvalue must be at
    /// least −1e-9·(1 + trace).
    pub fn new_psd(m: Matrix) -> Result<Self, MatError> {
        if !m.is_square() {
            return Err(MatError::DimensionMismatch(format!(
                "{}x{} matrix cannot be symmetric",
                m.rows(),
                m.cols()
            )));
        }
        let sym = m.symmetrized();
        let margin = psd_margin(&sym);
        if margin < -1e-9 * (1.0 + sym.trace()) {
            return Err(MatError::NotPositiveDefinite(
                "negative eigenvalue beyond PSD tolerance",
            ));
        }
        Ok(SpdMatrix { m: sym })
    }

    /// Strictly positive-definite construction: minimum eigenvalue must be
    /// strictly positive.
    pub fn new_spd(m: Matrix) -> Result<Self, MatError> {
        if !m.is_square() {
            return Err(MatError::DimensionMismatch(format!(
                "{}x{} matrix cannot be symmetric",
                m.rows(),
                m.cols()
            )));
        }
        let sym = m.symmetrized();
        if sym.rows() > 0 && psd_margin(&sym) <= 0.0 {
            return Err(MatError::NotPositiveDefinite(
                "eigenvalue not strictly positive",
            ));
        }
        Ok(SpdMatrix { m: sym })
    }

    /// Symmetrize without an eigenvalue check. For internal results whose
    /// definiteness is guaranteed algebraically (inverses of SPD matrices,
    /// information sums, congruence transforms).
    pub(crate) fn from_symmetric_unchecked(m: Matrix) -> Self {
        debug_assert!(m.is_square());
        SpdMatrix { m: m.symmetrized() }
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix {
            m: Matrix::identity(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        SpdMatrix {
            m: Matrix::zeros(n, n),
        }
    }

    pub fn scaled_identity(n: usize, c: f64) -> Result<Self, MatError> {
        SpdMatrix::new_psd(Matrix::identity(n).scale(c))
    }

    pub fn diag(entries: &[f64]) -> Result<Self, MatError> {
        SpdMatrix::new_psd(Matrix::diag(entries))
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    /// Lower-triangular Cholesky factor L with L·Lᵀ = A.
    pub fn cholesky(&self) -> Result<Matrix, MatError> {
        cholesky_matrix(&self.m)
    }

    /// Inverse via Cholesky solves; result symmetric by construction.
    pub fn inverse(&self) -> Result<SpdMatrix, MatError> {
        Ok(SpdMatrix::from_symmetric_unchecked(spd_inverse_matrix(
            &self.m,
        )?))
    }
}

/// Cholesky factorization of a symmetric matrix given as a plain [`Matrix`].
///
/// Fails with [`MatError::NotPositiveDefinite`] when a pivot is at most
/// 1e-14·trace(A)/dim.
pub(crate) fn cholesky_matrix(a: &Matrix) -> Result<Matrix, MatError> {
    debug_assert!(a.is_square());
    let n = a.rows();
    let tol = if n == 0 {
        0.0
    } else {
        1e-14 * a.trace() / n as f64
    };
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= tol {
            return Err(MatError::NotPositiveDefinite(
                "Cholesky pivot below tolerance",
            ));
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix via Cholesky solves.
pub(crate) fn spd_inverse_matrix(a: &Matrix) -> Result<Matrix, MatError> {
    let n = a.rows();
    let l = cholesky_matrix(a)?;
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for col in 0..n {
        // L y = e_col
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l.get(k, i) * y[k];
            }
            y[i] = s / l.get(i, i);
            inv.set(i, col, y[i]);
        }
    }
    Ok(inv.symmetrized())
}

/// Minimum eigenvalue of a symmetric matrix; A ⪰ 0 iff the result is ≥ −tol.
///
/// Defined for any symmetric input (the argument is symmetrized first).
pub fn psd_margin(a: &Matrix) -> f64 {
    if a.rows() == 0 {
        return 0.0;
    }
    let (values, _) = sym_eigen(a);
    values[0]
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns. Intended for the small dimensions used throughout this crate.
pub fn sym_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    debug_assert!(a.is_square());
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    if n <= 1 {
        return ((0..n).map(|i| m.get(i, i)).collect(), v);
    }
    let scale = m.frobenius_norm().max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of m.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).partial_cmp(&m.get(j, j)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new_col, v.get(k, old_col));
        }
    }
    (values, vectors)
}

/// A square root factor S with S·Sᵀ = A, built from the eigen-decomposition
/// with negative eigenvalues clamped to zero. Works for semidefinite inputs
/// where Cholesky would fail.
pub(crate) fn psd_sqrt(a: &SpdMatrix) -> Matrix {
    let (values, vectors) = sym_eigen(a.as_matrix());
    let n = a.dim();
    let mut s = vectors;
    for j in 0..n {
        let f = values[j].max(0.0).sqrt();
        for i in 0..n {
            let v = s.get(i, j) * f;
            s.set(i, j, v);
        }
    }
    s
}

/// Symmetric inverse square root A^{-1/2} via eigen-decomposition.
/// Eigenvalues are clamped to at least 1e-14 times the largest one.
pub(crate) fn sym_inverse_sqrt(a: &Matrix) -> Matrix {
    let (values, vectors) = sym_eigen(a);
    let n = a.rows();
    let floor = values.last().copied().unwrap_or(0.0).max(0.0) * 1e-14 + f64::MIN_POSITIVE;
    let mut scaled = vectors.clone();
    for j in 0..n {
        let f = 1.0 / values[j].max(floor).sqrt();
        for i in 0..n {
            let v = scaled.get(i, j) * f;
            scaled.set(i, j, v);
        }
    }
    scaled.mul(&vectors.transpose())
}

/// Floor a symmetric matrix to PSD: eigenvalues in [−tol, 0) are zeroed,
/// anything below −tol (tol = 1e-9·(1+|trace|)) is a hard error.
pub(crate) fn floor_to_psd(a: &Matrix) -> Result<SpdMatrix, MatError> {
    let sym = a.symmetrized();
    let (values, vectors) = sym_eigen(&sym);
    let tol = 1e-9 * (1.0 + sym.trace().abs());
    if values.first().copied().unwrap_or(0.0) < -tol {
        return Err(MatError::NotPositiveDefinite(
            "negative margin beyond flooring tolerance",
        ));
    }
    if values.first().copied().unwrap_or(0.0) >= 0.0 {
        return Ok(SpdMatrix { m: sym });
    }
    let n = sym.rows();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let f = values[j].max(0.0);
        for i in 0..n {
            let v = scaled.get(i, j) * f;
            scaled.set(i, j, v);
        }
    }
    Ok(SpdMatrix::from_symmetric_unchecked(
        scaled.mul(&vectors.transpose()),
    ))
}

/// Square grid of blocks over an assembled dense matrix. Block index `i` has
/// dimension `dims[i]`; the grid is `dims.len()` by `dims.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    data: Matrix,
}

impl BlockMatrix {
    pub fn zeros(dims: &[usize]) -> Self {
        let total: usize = dims.iter().sum();
        BlockMatrix {
            dims: dims.to_vec(),
            offsets: offsets_of(dims),
            data: Matrix::zeros(total, total),
        }
    }

    pub fn from_dense(dims: &[usize], data: Matrix) -> Result<Self, MatError> {
        let total: usize = dims.iter().sum();
        if data.rows() != total || data.cols() != total {
            return Err(MatError::DimensionMismatch(format!(
                "assembled dimension {}x{} does not match block dims totalling {}",
                data.rows(),
                data.cols(),
                total
            )));
        }
        Ok(BlockMatrix {
            dims: dims.to_vec(),
            offsets: offsets_of(dims),
            data,
        })
    }

    pub fn block_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.data.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let (ri, rj) = (self.offsets[i], self.offsets[j]);
        let (di, dj) = (self.dims[i], self.dims[j]);
        let mut out = Matrix::zeros(di, dj);
        for r in 0..di {
            for c in 0..dj {
                out.set(r, c, self.data.get(ri + r, rj + c));
            }
        }
        out
    }

    pub fn set_block(&mut self, i: usize, j: usize, m: &Matrix) {
        assert_eq!(
            (m.rows(), m.cols()),
            (self.dims[i], self.dims[j]),
            "block dims"
        );
        let (ri, rj) = (self.offsets[i], self.offsets[j]);
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                self.data.set(ri + r, rj + c, m.get(r, c));
            }
        }
    }

    /// True when every block (i,j) equals the transpose of block (j,i)
    /// within `tol` on each entry.
    pub fn block_symmetric_within(&self, tol: f64) -> bool {
        let n = self.total_dim();
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.data.get(i, j) - self.data.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

fn offsets_of(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        offsets.push(acc);
        acc += d;
    }
    offsets
}

/// Extract the d×d diagonal block `i` of a flat matrix partitioned into
/// uniform d-sized blocks.
pub(crate) fn diag_block(a: &Matrix, d: usize, i: usize) -> Matrix {
    sub_block(a, d, i, i)
}

/// Extract the (i,j) block of a flat matrix partitioned into uniform
/// d-sized blocks.
pub(crate) fn sub_block(a: &Matrix, d: usize, i: usize, j: usize) -> Matrix {
    let mut out = Matrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            out.set(r, c, a.get(i * d + r, j * d + c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn cholesky_identity() {
        let a = SpdMatrix::identity(3);
        let l = a.cholesky().unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_hand_checked_factor() {
        // L·Lᵀ = [[4,2],[2,5]] with L = [[2,0],[1,2]].
        let a = SpdMatrix::new_spd(Matrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]])).unwrap();
        let l = a.cholesky().unwrap();
        assert_close(l.get(0, 0), 2.0, 1e-15);
        assert_close(l.get(1, 0), 1.0, 1e-15);
        assert_close(l.get(1, 1), 2.0, 1e-15);
        assert_close(l.get(0, 1), 0.0, 0.0);
        let rec = l.mul(&l.transpose());
        assert!(rec.sub(a.as_matrix()).frobenius_norm() <= 1e-12 * a.as_matrix().frobenius_norm());
    }

    #[test]
    fn cholesky_fig1_style_matrix() {
        let a = SpdMatrix::new_spd(Matrix::from_rows(&[[1.0, -2.0], [-2.0, 5.0]])).unwrap();
        let l = a.cholesky().unwrap();
        assert_close(l.get(0, 0), 1.0, 1e-15);
        assert_close(l.get(1, 0), -2.0, 1e-15);
        assert_close(l.get(1, 1), 1.0, 1e-15);
    }

    #[test]
    fn cholesky_rejects_degenerate() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(
            cholesky_matrix(&a).unwrap_err(),
            MatError::NotPositiveDefinite("Cholesky pivot below tolerance")
        );
    }

    #[test]
    fn inverse_identity() {
        let a = SpdMatrix::identity(4);
        assert_eq!(a.inverse().unwrap(), SpdMatrix::identity(4));
    }

    #[test]
    fn inverse_diagonal() {
        let a = SpdMatrix::diag(&[2.0, 4.0]).unwrap();
        let inv = a.inverse().unwrap();
        assert_close(inv.get(0, 0), 0.5, 1e-15);
        assert_close(inv.get(1, 1), 0.25, 1e-15);
        assert_close(inv.get(0, 1), 0.0, 1e-15);
    }

    #[test]
    fn inverse_of_regularized_rank_deficient() {
        // [[2,2],[2,2]] + 1e-6·I, as a nearly singular but valid SPD input.
        let a =
            SpdMatrix::new_spd(Matrix::from_rows(&[[2.0 + 1e-6, 2.0], [2.0, 2.0 + 1e-6]])).unwrap();
        let inv = a.inverse().unwrap();
        let prod = a.as_matrix().mul(inv.as_matrix());
        // Condition number is ~4e6 here, so allow cond·eps worth of drift.
        assert!(prod.sub(&Matrix::identity(2)).frobenius_norm() <= 1e-8);
    }

    #[test]
    fn psd_margin_examples() {
        assert_eq!(psd_margin(&Matrix::zeros(2, 2)), 0.0);
        assert_close(psd_margin(&Matrix::diag(&[1.0, -3.0])), -3.0, 1e-14);
        // Eigenvalues of [[2,2],[2,2]] are {0, 4}.
        assert_close(
            psd_margin(&Matrix::from_rows(&[[2.0, 2.0], [2.0, 2.0]])),
            0.0,
            1e-14,
        );
    }

    #[test]
    fn construction_symmetrizes() {
        let a = SpdMatrix::new_psd(Matrix::from_rows(&[[1.0, 0.25], [0.75, 2.0]])).unwrap();
        assert_close(a.get(0, 1), 0.5, 0.0);
        assert_close(a.get(1, 0), 0.5, 0.0);
    }

    #[test]
    fn spd_construction_rejects_psd_boundary() {
        let m = Matrix::from_rows(&[[2.0, 2.0], [2.0, 2.0]]);
        assert!(SpdMatrix::new_spd(m.clone()).is_err());
        assert!(SpdMatrix::new_psd(m).is_ok());
    }

    #[test]
    fn block_matrix_roundtrip() {
        let mut b = BlockMatrix::zeros(&[2, 1]);
        b.set_block(0, 0, &Matrix::from_rows(&[[1.0, 2.0], [2.0, 5.0]]));
        b.set_block(0, 1, &Matrix::from_rows(&[[3.0], [4.0]]));
        b.set_block(1, 0, &Matrix::from_rows(&[[3.0, 4.0]]));
        b.set_block(1, 1, &Matrix::from_rows(&[[9.0]]));
        assert_eq!(b.total_dim(), 3);
        assert!(b.block_symmetric_within(0.0));
        assert_eq!(b.block(0, 1), Matrix::from_rows(&[[3.0], [4.0]]));
        let dense = b.as_matrix().clone();
        let again = BlockMatrix::from_dense(&[2, 1], dense).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn block_matrix_dimension_check() {
        assert!(BlockMatrix::from_dense(&[2, 2], Matrix::identity(3)).is_err());
    }

    #[test]
    fn eigen_reconstructs() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, -0.25], [0.5, -0.25, 2.0]]);
        let (values, vectors) = sym_eigen(&a);
        let lambda = Matrix::diag(&values);
        let rec = vectors.mul(&lambda).mul(&vectors.transpose());
        assert!(rec.sub(&a).frobenius_norm() <= 1e-12 * a.frobenius_norm());
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn floor_to_psd_zeroes_small_negatives() {
        let a = Matrix::diag(&[1.0, -1e-12]);
        let floored = floor_to_psd(&a).unwrap();
        assert!(floored.get(1, 1) >= 0.0);
        assert!(floor_to_psd(&Matrix::diag(&[1.0, -1e-3])).is_err());
    }

    #[test]
    fn matrix_serde_roundtrip_is_lossless() {
        let a = Matrix::from_rows(&[[0.1, -2.5e-17], [1.0 / 3.0, 4.0]]);
        let json = serde_json::to_string(&a).unwrap();
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn matrix_serde_rejects_bad_payload() {
        let bad = r#"{"rows":2,"cols":2,"data":[1.0,2.0,3.0]}"#;
        assert!(serde_json::from_str::<Matrix>(bad).is_err());
    }
}
