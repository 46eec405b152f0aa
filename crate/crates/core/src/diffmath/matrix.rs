use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rayon::prelude::*;

use super::MathError;

/// Floating-point element type for every kernel in this crate.
///
/// Training runs in `f32`; gradient verification can run the identical code
/// path in `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Send + Sync + Debug + Display + Default + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Row-major dense matrix. Vectors are stored as `1 x n`.
#[derive(Clone, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Debug> Debug for Matrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish_non_exhaustive()
    }
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, MathError> {
        if data.len() != rows * cols {
            return Err(MathError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, MathError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(MathError::BadLength {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|x| U::from_f64(x.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    pub fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<(), MathError> {
        if self.shape() != other.shape() {
            return Err(MathError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), MathError> {
        self.ensure_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x = *x * s);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data
            .iter()
            .map(|x| {
                let v = x.to_f64().unwrap_or(f64::NAN);
                v * v
            })
            .sum()
    }

    /// Column sums, returned as a `1 x cols` matrix.
    pub fn column_sums(&self) -> Self {
        let mut out = vec![T::zero(); self.cols];
        for row in self.iter_rows() {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        Self::row_vector(out)
    }

    /// Dense product `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self, MathError> {
        if self.cols != rhs.rows {
            return Err(MathError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        if n == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(n)
            .zip(self.data.par_chunks(self.cols.max(1)))
            .for_each(|(o, a)| {
                for (j, &aj) in a.iter().enumerate() {
                    if aj == T::zero() {
                        continue;
                    }
                    for (ov, &bv) in o.iter_mut().zip(rhs.row(j)) {
                        *ov = *ov + aj * bv;
                    }
                }
            });
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_transpose_rhs(&self, rhs: &Self) -> Result<Self, MathError> {
        if self.cols != rhs.cols {
            return Err(MathError::ShapeMismatch {
                op: "matmul_transpose_rhs",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        let n = rhs.rows;
        if n == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(n)
            .zip(self.data.par_chunks(self.cols.max(1)))
            .for_each(|(o, a)| {
                for (j, ov) in o.iter_mut().enumerate() {
                    *ov = a.iter().zip(rhs.row(j)).map(|(&x, &y)| x * y).sum();
                }
            });
        Ok(out)
    }

    /// `selfᵀ · rhs`, reducing over the shared row dimension in row order.
    pub fn transpose_matmul(&self, rhs: &Self) -> Result<Self, MathError> {
        if self.rows != rhs.rows {
            return Err(MathError::ShapeMismatch {
                op: "transpose_matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        let n = rhs.cols;
        if n == 0 {
            return Ok(out);
        }
        out.data.par_chunks_mut(n).enumerate().for_each(|(j, o)| {
            for b in 0..self.rows {
                let a = self.get(b, j);
                if a == T::zero() {
                    continue;
                }
                for (ov, &r) in o.iter_mut().zip(rhs.row(b)) {
                    *ov = *ov + a * r;
                }
            }
        });
        Ok(out)
    }
}

/// Compressed sparse row matrix, used for bag-of-words encoder inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T = f32> {
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends one row; indices must be strictly increasing and `< cols`.
    pub fn push_row(&mut self, indices: &[u32], values: &[T]) -> Result<(), MathError> {
        if indices.len() != values.len() {
            return Err(MathError::BadSparseRow("indices and values differ in length"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MathError::BadSparseRow("indices not strictly increasing"));
        }
        if indices.last().is_some_and(|&i| i as usize >= self.cols) {
            return Err(MathError::BadSparseRow("index out of range"));
        }
        self.indices.extend_from_slice(indices);
        self.values.extend_from_slice(values);
        self.indptr.push(self.indices.len());
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> (&[u32], &[T]) {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.rows(), self.cols);
        for r in 0..self.rows() {
            let (idx, val) = self.row(r);
            for (&i, &v) in idx.iter().zip(val) {
                m.set(r, i as usize, v);
            }
        }
        m
    }
}
