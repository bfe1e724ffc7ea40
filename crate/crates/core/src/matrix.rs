//! Dense row-major matrices sized for small control problems.
//!
//! Everything here is plain `f64` storage with the handful of structural
//! predicates positive-systems analysis relies on (Metzler, nonnegative) and a
//! partial-pivoting Gaussian elimination solver. There is no sparse path; the
//! problems this crate targets have a state dimension in the tens at most.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default tolerance for the Metzler / nonnegativity predicates.
pub const DEFAULT_STRUCTURE_TOL: f64 = 1e-8;

/// Relative pivot threshold for [`solve_linear`]: a pivot is rejected when
/// `|pivot| < SINGULAR_PIVOT_REL * ||A||_inf`.
pub const SINGULAR_PIVOT_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is singular (pivot {pivot} below threshold)")]
    Singular { pivot: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("{op} is undefined for an empty matrix")]
    Empty { op: &'static str },
}

fn mismatch(op: &'static str, expected: impl fmt::Display, found: impl fmt::Display) -> LinalgError {
    LinalgError::DimensionMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// Dense real matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(mismatch("Matrix::new", rows * cols, data.len()));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Row vector of ones, `1_n^T`.
    pub fn ones_row(n: usize) -> Self {
        Self::filled(1, n, 1.0)
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from nested rows. Ragged input or non-finite values
    /// are rejected.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(mismatch("Matrix::from_rows", format!("{cols} columns"), format!("{} in row {i}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self, LinalgError> {
        if self.shape() != other.shape() {
            return Err(mismatch(op, format!("{:?}", self.shape()), format!("{:?}", other.shape())));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(mismatch(
                "matmul",
                format!("{} rows on the right", self.cols),
                other.rows,
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.cols != v.len() {
            return Err(mismatch("mul_vec", self.cols, v.len()));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `v^T * self`, i.e. a weighted sum of rows.
    pub fn left_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.rows != v.len() {
            return Err(mismatch("left_mul_vec", self.rows, v.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &w) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += w * a;
            }
        }
        Ok(out)
    }

    /// Sum of each row, i.e. `self * 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Sum of each column, i.e. `1^T * self`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a;
            }
        }
        out
    }

    pub fn hstack(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.rows != other.rows {
            return Err(mismatch("hstack", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self { rows: self.rows, cols, data })
    }

    pub fn vstack(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.cols {
            return Err(mismatch("vstack", self.cols, other.cols));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, LinalgError> {
        Ok(self.sub(other)?.max_abs())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}", self.rows, self.cols)?;
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:>12.6}")).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Dense real vector.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn as_column(&self) -> Matrix {
        Matrix::column(&self.0)
    }
}

impl std::ops::Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

/// True iff every off-diagonal entry of `a` is at least `-tol`.
pub fn is_metzler(a: &Matrix, tol: f64) -> Result<bool, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            op: "is_metzler",
            rows: a.rows,
            cols: a.cols,
        });
    }
    Ok((0..a.rows).all(|i| (0..a.cols).all(|j| i == j || a[(i, j)] >= -tol)))
}

/// True iff every entry of `m` is at least `-tol`.
pub fn is_nonnegative(m: &Matrix, tol: f64) -> bool {
    m.data.iter().all(|&v| v >= -tol)
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            op: "solve_linear",
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.rows != b.rows {
        return Err(mismatch("solve_linear", a.rows, b.rows));
    }
    let n = a.rows;
    let m = b.cols;
    let threshold = SINGULAR_PIVOT_REL * a.norm_inf();
    let mut lu = a.data.clone();
    let mut rhs = b.data.clone();

    for k in 0..n {
        let (p, pivot_abs) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold || pivot_abs == 0.0 {
            return Err(LinalgError::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            for j in 0..m {
                rhs.swap(k * m + j, p * m + j);
            }
        }
        let pivot = lu[k * n + k];
        for i in (k + 1)..n {
            let factor = lu[i * n + k] / pivot;
            if factor == 0.0 {
                continue;
            }
            lu[i * n + k] = 0.0;
            for j in (k + 1)..n {
                lu[i * n + j] -= factor * lu[k * n + j];
            }
            for j in 0..m {
                rhs[i * m + j] -= factor * rhs[k * m + j];
            }
        }
    }

    for k in (0..n).rev() {
        let pivot = lu[k * n + k];
        for j in 0..m {
            let mut acc = rhs[k * m + j];
            for i in (k + 1)..n {
                acc -= lu[k * n + i] * rhs[i * m + j];
            }
            rhs[k * m + j] = acc / pivot;
        }
    }
    Matrix::new(n, m, rhs)
}

/// Splits `m` into its positive and negative parts: `m = plus - minus`,
/// both nonnegative.
pub fn split_pos_neg(m: &Matrix) -> (Matrix, Matrix) {
    let plus = m.map(|v| v.max(0.0));
    let minus = plus.sub(m).expect("same shape");
    (plus, minus)
}

/// Largest row sum of `m`.
pub fn max_row_sum(m: &Matrix) -> Result<f64, LinalgError> {
    if m.is_empty() {
        return Err(LinalgError::Empty { op: "max_row_sum" });
    }
    Ok(m.row_sums().into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn metzler_examples() {
        assert!(is_metzler(&m(&[&[-2.0, 1.0], &[3.0, -5.0]]), 0.0).unwrap());
        assert!(!is_metzler(&m(&[&[-2.0, -1.0], &[3.0, -5.0]]), 0.0).unwrap());
        assert!(is_metzler(&Matrix::identity(3), 0.0).unwrap());
        assert!(matches!(
            is_metzler(&Matrix::zeros(2, 3), 0.0),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn nonnegative_examples() {
        assert!(is_nonnegative(&Matrix::column(&[1.0, 2.0]), 0.0));
        assert!(!is_nonnegative(&Matrix::column(&[1.0, -6.0]), 0.0));
        assert!(is_nonnegative(&Matrix::zeros(2, 2), 0.0));
        assert!(is_nonnegative(&Matrix::column(&[-1e-10]), DEFAULT_STRUCTURE_TOL));
    }

    #[test]
    fn solve_examples() {
        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(solve_linear(&Matrix::identity(2), &b).unwrap(), b);

        let a = m(&[&[-2.0, 0.0], &[3.0, -7.0]]);
        let x = solve_linear(&a, &Matrix::column(&[2.0, 0.0])).unwrap();
        assert!((x[(0, 0)] + 1.0).abs() < 1e-15);
        assert!((x[(1, 0)] + 3.0 / 7.0).abs() < 1e-15);

        let err = solve_linear(&Matrix::zeros(2, 2), &Matrix::column(&[1.0, 1.0])).unwrap_err();
        assert_eq!(err, LinalgError::Singular { pivot: 0 });
    }

    #[test]
    fn singular_pivot_index_is_reported() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let err = solve_linear(&a, &Matrix::column(&[1.0, 1.0])).unwrap_err();
        assert_eq!(err, LinalgError::Singular { pivot: 1 });
    }

    #[test]
    fn split_examples() {
        let (p, n) = split_pos_neg(&Matrix::column(&[2.0, 0.0]));
        assert_eq!(p, Matrix::column(&[2.0, 0.0]));
        assert_eq!(n, Matrix::column(&[0.0, 0.0]));
        let (p, n) = split_pos_neg(&Matrix::column(&[1.0, -6.0]));
        assert_eq!(p, Matrix::column(&[1.0, 0.0]));
        assert_eq!(n, Matrix::column(&[0.0, 6.0]));
        let (p, n) = split_pos_neg(&Matrix::zeros(2, 2));
        assert_eq!(p, Matrix::zeros(2, 2));
        assert_eq!(n, Matrix::zeros(2, 2));
    }

    #[test]
    fn max_row_sum_examples() {
        assert_eq!(max_row_sum(&m(&[&[1.0, 0.0], &[3.0 / 7.0, 0.0]])).unwrap(), 1.0);
        assert_eq!(max_row_sum(&Matrix::identity(3)).unwrap(), 1.0);
        assert_eq!(max_row_sum(&Matrix::column(&[0.5, 0.75, 0.375])).unwrap(), 0.75);
        assert!(matches!(max_row_sum(&Matrix::zeros(0, 0)), Err(LinalgError::Empty { .. })));
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    fn arb_matrix(max_dim: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-1e3..1e3f64, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
        })
    }

    fn arb_square(max_dim: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_dim).prop_flat_map(|n| {
            proptest::collection::vec(-10.0..10.0f64, n * n).prop_map(move |d| Matrix::new(n, n, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn split_is_exact(a in arb_matrix(6)) {
            let (p, n) = split_pos_neg(&a);
            prop_assert!(is_nonnegative(&p, 0.0));
            prop_assert!(is_nonnegative(&n, 0.0));
            prop_assert_eq!(p.sub(&n).unwrap(), a);
        }

        #[test]
        fn metzler_closed_under_sum(a in arb_square(5), b in arb_square(5)) {
            let n = a.rows().min(b.rows());
            let metzlerize = |m: &Matrix| {
                let mut out = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] = if i == j { m[(i, j)] } else { m[(i, j)].abs() };
                    }
                }
                out
            };
            let (a, b) = (metzlerize(&a), metzlerize(&b));
            prop_assert!(is_metzler(&a, 0.0).unwrap() && is_metzler(&b, 0.0).unwrap());
            prop_assert!(is_metzler(&a.add(&b).unwrap(), 0.0).unwrap());
        }

        #[test]
        fn solve_residual_is_small(a in arb_square(6), rhs in proptest::collection::vec(-10.0..10.0f64, 12)) {
            let n = a.rows();
            // Diagonal dominance keeps the condition number far below 1e6.
            let mut a = a;
            for i in 0..n {
                let off: f64 = a.row(i).iter().map(|v| v.abs()).sum();
                a[(i, i)] = off + 1.0;
            }
            let b = Matrix::new(n, 2, rhs[..n * 2].to_vec()).unwrap();
            let x = solve_linear(&a, &b).unwrap();
            let residual = a.matmul(&x).unwrap().sub(&b).unwrap().max_abs();
            prop_assert!(residual <= 1e-10 * (1.0 + b.max_abs()));
        }
    }
}
