//! Dense real matrices and the digital reference routines every optical
//! result is checked against.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots smaller than this (absolute) are treated as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Sign selector for addition and subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Norm used by the accuracy metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Frobenius,
    Spectral,
}

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Matrix whose entries are `f(i, j)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
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

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn column(&self, j: usize) -> ColumnVector {
        ColumnVector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn set_column(&mut self, j: usize, v: &ColumnVector) {
        assert_eq!(v.len(), self.rows, "column length");
        for (i, x) in v.iter().enumerate() {
            self[(i, j)] = *x;
        }
    }

    pub fn from_columns(columns: &[ColumnVector]) -> Result<Self> {
        let rows = columns.first().map(ColumnVector::len).unwrap_or(0);
        if columns.is_empty() || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidMatrix("ragged or empty column set".into()));
        }
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            m.set_column(j, c);
        }
        Ok(m)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy of the `nr`×`nc` block starting at (`r0`, `c0`).
    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        assert!(
            r0 + nr <= self.rows && c0 + nc <= self.cols,
            "block out of range"
        );
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        assert!(
            r0 + block.rows <= self.rows && c0 + block.cols <= self.cols,
            "block out of range"
        );
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.data
            .chunks(self.cols)
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest singular value by power iteration on AᵀA.
    pub fn spectral_norm(&self) -> f64 {
        let ata = matmul(&self.transpose(), self).expect("conformable");
        let mut v = ColumnVector(vec![1.0; self.cols]);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = ata.matvec(&v).expect("conformable");
            let n = w.norm2();
            if n == 0.0 {
                return 0.0;
            }
            v = w.scale(1.0 / n);
            if (n - lambda).abs() <= 1e-15 * n {
                lambda = n;
                break;
            }
            lambda = n;
        }
        lambda.sqrt()
    }

    pub fn matvec(&self, x: &ColumnVector) -> Result<ColumnVector> {
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                left: self.shape(),
                right: (x.len(), 1),
            });
        }
        Ok(ColumnVector(
            self.data
                .chunks(self.cols)
                .map(|row| row.iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// Dense real column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnVector(Vec<f64>);

impl ColumnVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidMatrix("empty vector".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite vector entry".into()));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "empty vector");
        Self(vec![0.0; n])
    }

    /// Unit vector `e_j` of length `n`.
    pub fn unit(n: usize, j: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[j] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }

    /// `self + c·other`.
    #[must_use]
    pub fn axpy(&self, c: f64, other: &ColumnVector) -> Self {
        assert_eq!(self.len(), other.len(), "vector length");
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }

    pub fn distance(&self, other: &ColumnVector) -> f64 {
        self.axpy(-1.0, other).norm2()
    }
}

impl Index<usize> for ColumnVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ColumnVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..b.cols {
                out[(i, j)] += aik * b[(k, j)];
            }
        }
    }
    Ok(out)
}

/// `a + sign·b`.
pub fn matadd(a: &Matrix, b: &Matrix, sign: Sign) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "matadd",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let s = sign.as_f64();
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + s * y).collect(),
    })
}

/// Gauss-Jordan inversion with partial (row) pivoting.
pub fn dense_invert(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch {
            op: "dense_invert",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let n = a.rows;
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| work[(r, col)].abs().total_cmp(&work[(s, col)].abs()))
            .expect("non-empty range");
        let pivot = work[(pivot_row, col)];
        if pivot.abs() < PIVOT_THRESHOLD {
            return Err(Error::SingularMatrix { column: col, pivot });
        }
        if pivot_row != col {
            swap_rows(&mut work, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let scale = 1.0 / pivot;
        for j in 0..n {
            work[(col, j)] *= scale;
            inv[(col, j)] *= scale;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work[(r, j)] -= factor * work[(col, j)];
                inv[(r, j)] -= factor * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

/// Solves `a·x = b` by dense inversion.
pub fn dense_solve(a: &Matrix, b: &ColumnVector) -> Result<ColumnVector> {
    dense_invert(a)?.matvec(b)
}

fn swap_rows(m: &mut Matrix, r: usize, s: usize) {
    let cols = m.cols;
    for j in 0..cols {
        m.data.swap(r * cols + j, s * cols + j);
    }
}

/// Estimates the spectral radius as `‖Mᵏ‖_F^(1/k)` with `k = iters`.
///
/// The estimate is an upper bound that tightens as `iters` grows. Powers are
/// renormalized every step so large `k` neither overflows nor underflows.
pub fn spectral_radius_estimate(m: &Matrix, iters: usize) -> f64 {
    assert!(m.is_square(), "spectral radius of non-square matrix");
    assert!(iters >= 1, "iters must be at least 1");
    let n0 = m.frobenius_norm();
    if n0 == 0.0 {
        return 0.0;
    }
    let mut power = m.scale(1.0 / n0);
    let mut log_norm = n0.ln();
    for _ in 1..iters {
        let next = matmul(&power, m).expect("square");
        let n = next.frobenius_norm();
        if n == 0.0 {
            return 0.0;
        }
        log_norm += n.ln();
        power = next.scale(1.0 / n);
    }
    (log_norm / iters as f64).exp()
}

/// `(1 − ‖meas − ideal‖ / ‖ideal‖) × 100` with the Frobenius norm.
pub fn accuracy_percent(meas: &Matrix, ideal: &Matrix) -> Result<f64> {
    accuracy_percent_with(meas, ideal, Norm::Frobenius)
}

pub fn accuracy_percent_with(meas: &Matrix, ideal: &Matrix, norm: Norm) -> Result<f64> {
    let diff = matadd(meas, ideal, Sign::Minus)?;
    let measure = |m: &Matrix| match norm {
        Norm::Frobenius => m.frobenius_norm(),
        Norm::Spectral => m.spectral_norm(),
    };
    let reference = measure(ideal);
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((1.0 - measure(&diff) / reference) * 100.0)
}

/// Accuracy of a vector result, treating both as single-column matrices.
pub fn vector_accuracy_percent(meas: &ColumnVector, ideal: &ColumnVector) -> Result<f64> {
    let to_matrix = |v: &ColumnVector| Matrix::new(v.len(), 1, v.as_slice().to_vec());
    accuracy_percent(&to_matrix(meas)?, &to_matrix(ideal)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a1() -> Matrix {
        crate::fixtures::a1()
    }

    /// Cofactor-expansion inverse, independent of elimination.
    fn cofactor_inverse(a: &Matrix) -> Matrix {
        fn det(m: &Matrix) -> f64 {
            let n = m.rows();
            if n == 1 {
                return m[(0, 0)];
            }
            (0..n)
                .map(|j| {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sign * m[(0, j)] * det(&minor(m, 0, j))
                })
                .sum()
        }
        fn minor(m: &Matrix, r: usize, c: usize) -> Matrix {
            let n = m.rows();
            Matrix::from_fn(n - 1, n - 1, |i, j| {
                m[(if i < r { i } else { i + 1 }, if j < c { j } else { j + 1 })]
            })
        }
        let d = det(a);
        let n = a.rows();
        Matrix::from_fn(n, n, |i, j| {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * det(&minor(a, j, i)) / d
        })
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&Matrix::identity(4)), 2.0);
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 3)), 0.0);
        let m = Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]]).unwrap();
        assert_eq!(frobenius_norm(&m), 5.0);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ColumnVector::new(vec![]).is_err());
        assert!(ColumnVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn invert_examples() {
        assert_eq!(
            dense_invert(&Matrix::identity(4)).unwrap(),
            Matrix::identity(4)
        );
        assert_eq!(
            dense_invert(&Matrix::diag(&[2.0, 4.0])).unwrap(),
            Matrix::diag(&[0.5, 0.25])
        );
        let inv = dense_invert(&a1()).unwrap();
        let oracle = cofactor_inverse(&a1());
        let diff = matadd(&inv, &oracle, Sign::Minus).unwrap();
        assert!(diff.frobenius_norm() < 1e-12, "{diff:?}");
    }

    #[test]
    fn invert_needs_pivoting() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(dense_invert(&a).unwrap(), a);
    }

    #[test]
    fn invert_singular() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(
            dense_invert(&a),
            Err(Error::SingularMatrix { .. })
        ));
        let r = Matrix::zeros(2, 3);
        assert!(matches!(dense_invert(&r), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn spectral_radius_examples() {
        let d = Matrix::diag(&[0.5, 0.2]);
        assert!((spectral_radius_estimate(&d, 50) - 0.5).abs() < 1e-6);
        assert_eq!(spectral_radius_estimate(&Matrix::zeros(3, 3), 10), 0.0);
        let nil = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius_estimate(&nil, 50), 0.0);
        assert_eq!(spectral_radius_estimate(&nil, 1), 1.0);
    }

    #[test]
    fn spectral_radius_refines_with_iters() {
        let m = Matrix::from_rows(&[[0.5, 0.4], [0.0, 0.3]]).unwrap();
        let coarse = spectral_radius_estimate(&m, 5);
        let fine = spectral_radius_estimate(&m, 200);
        assert!(fine <= coarse);
        assert!((0.5..0.51).contains(&fine), "{fine}");
    }

    #[test]
    fn spectral_radius_large_powers_stay_finite() {
        let m = Matrix::diag(&[3.0, 1e-3]);
        assert!((spectral_radius_estimate(&m, 2000) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn accuracy_examples() {
        let x = a1();
        assert_eq!(accuracy_percent(&x, &x).unwrap(), 100.0);
        assert_eq!(accuracy_percent(&Matrix::zeros(4, 4), &x).unwrap(), 0.0);
        let mut meas = Matrix::identity(2);
        meas[(0, 0)] += 0.02;
        let acc = accuracy_percent(&meas, &Matrix::identity(2)).unwrap();
        let by_hand = 100.0 * (1.0 - 0.02 / 2f64.sqrt());
        assert!((acc - by_hand).abs() < 1e-12);
        assert!((acc - 98.586).abs() < 1e-3);
        assert!(matches!(
            accuracy_percent(&x, &Matrix::zeros(4, 4)),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn spectral_accuracy_on_diagonal_error() {
        let mut meas = Matrix::identity(2);
        meas[(0, 0)] += 0.02;
        let acc = accuracy_percent_with(&meas, &Matrix::identity(2), Norm::Spectral).unwrap();
        assert!((acc - 98.0).abs() < 1e-9);
    }

    #[test]
    fn arithmetic_examples() {
        let b = a1();
        assert_eq!(matmul(&Matrix::identity(4), &b).unwrap(), b);
        assert_eq!(
            matadd(&b, &b.scale(-1.0), Sign::Plus).unwrap(),
            Matrix::zeros(4, 4)
        );
        assert!(matches!(
            matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matadd(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2), Sign::Minus).is_err());
    }

    #[test]
    fn norms() {
        let m = Matrix::from_rows(&[[1.0, -2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(m.norm_inf(), 7.0);
        assert_eq!(m.norm_one(), 6.0);
        let d = Matrix::diag(&[3.0, -5.0]);
        assert!((d.spectral_norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn serde_nested_arrays() {
        let m: Matrix = serde_json::from_str("[[1, 2], [3, 4]]").unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(serde_json::to_string(&m).unwrap(), "[[1.0,2.0],[3.0,4.0]]");
        assert!(serde_json::from_str::<Matrix>("[[1], [2, 3]]").is_err());
    }
}
