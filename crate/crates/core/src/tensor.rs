//! Dense row-major `f64` tensors.
//!
//! Everything in the model is at most two-dimensional: a batch of rows by a
//! feature width. Scalars are stored with shape `[1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        Ok(Self { shape, values })
    }

    /// Builds a `(rows, cols)` matrix.
    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: vec![rows, cols],
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            shape: vec![rows, cols],
            values: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1, 1],
            values: vec![value],
        }
    }

    /// A single row `(1, len)`.
    pub fn row(values: Vec<f64>) -> Self {
        Self {
            shape: vec![1, values.len()],
            values,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self {
            shape: vec![rows, cols],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Leading extent; 1 for rank-0/rank-1 tensors.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Trailing extent.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.cols();
        self.values[row * cols + col] = value;
    }

    pub fn row_slice(&self, row: usize) -> &[f64] {
        let cols = self.cols();
        &self.values[row * cols..(row + 1) * cols]
    }

    pub fn row_slice_mut(&mut self, row: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.values[row * cols..(row + 1) * cols]
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.values[0]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Copies columns `[start, start+len)` of every row.
    pub fn cols_range(&self, start: usize, len: usize) -> Self {
        let cols = self.cols();
        let rows = self.rows();
        let mut values = Vec::with_capacity(rows * len);
        for r in 0..rows {
            values.extend_from_slice(&self.values[r * cols + start..r * cols + start + len]);
        }
        Self {
            shape: vec![rows, len],
            values,
        }
    }

    /// Copies rows `[start, start+len)`.
    pub fn rows_range(&self, start: usize, len: usize) -> Self {
        let cols = self.cols();
        Self {
            shape: vec![len, cols],
            values: self.values[start * cols..(start + len) * cols].to_vec(),
        }
    }

    /// Gathers the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let cols = self.cols();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            values.extend_from_slice(self.row_slice(r));
        }
        Self {
            shape: vec![rows.len(), cols],
            values,
        }
    }

    /// Concatenates matrices with equal row counts along the last axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Self> {
        let rows = parts.first().map(|p| p.rows()).unwrap_or(0);
        for p in parts {
            if p.rows() != rows {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let total: usize = parts.iter().map(|p| p.cols()).sum();
        let mut values = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                values.extend_from_slice(p.row_slice(r));
            }
        }
        Ok(Self {
            shape: vec![rows, total],
            values,
        })
    }

    /// Stacks matrices with equal widths vertically.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Self> {
        let cols = parts.first().map(|p| p.cols()).unwrap_or(0);
        let mut values = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols() != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            rows += p.rows();
            values.extend_from_slice(&p.values);
        }
        Ok(Self {
            shape: vec![rows, cols],
            values,
        })
    }

    /// Row-major matrix product of `(m,k)` and `(k,n)`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Self> {
        if self.shape.len() != 2 || rhs.shape.len() != 2 || self.shape[1] != rhs.shape[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.values, false, &rhs.values, false, &mut out, 0.0);
        Ok(Self {
            shape: vec![m, n],
            values: out,
        })
    }

    /// Adds a `(1, cols)` row to every row.
    pub fn add_row(&self, bias: &Tensor) -> Result<Self> {
        if bias.len() != self.cols() {
            return Err(Error::Shape {
                op: "add_row",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let mut out = self.clone();
        let cols = self.cols();
        for (i, v) in out.values.iter_mut().enumerate() {
            *v += bias.values[i % cols];
        }
        Ok(out)
    }
}

/// `c = a·b + beta·c` where `a` is `(m,k)` (or its transpose stored `(k,m)`)
/// and `b` is `(k,n)` (or its transpose stored `(n,k)`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe the dense buffers above, whose lengths are
    // m*k, k*n and m*n; matrixmultiply reads/writes only inside them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::matrix(3, 2, vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.values(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn transposed_gemm() {
        // a stored as (k,m) = (3,2); a^T is (2,3)
        let at = [1., 4., 2., 5., 3., 6.];
        let b = [7., 8., 9., 10., 11., 12.];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &at, true, &b, false, &mut c, 0.0);
        assert_eq!(c, [58., 64., 139., 154.]);
    }

    #[test]
    fn concat_and_slice() {
        let a = Tensor::matrix(2, 1, vec![1., 2.]).unwrap();
        let b = Tensor::matrix(2, 2, vec![3., 4., 5., 6.]).unwrap();
        let c = Tensor::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(c.values(), &[1., 3., 4., 2., 5., 6.]);
        assert_eq!(c.cols_range(1, 2), b);
        assert_eq!(c.select_rows(&[1]).values(), &[2., 5., 6.]);
    }
}
