use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use super::NnError;

/// Floating-point element type. `f32` for training, `f64` for gradient
/// checks.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// Exact bit pattern as lowercase hex (8 digits for f32, 16 for f64).
    fn to_hex(self) -> String;

    /// Inverse of [`Scalar::to_hex`] for a single value.
    fn from_hex(s: &str) -> Option<Self>;

    /// Width in hex digits of one encoded value.
    const HEX_WIDTH: usize;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const HEX_WIDTH: usize = 8;

    fn to_hex(self) -> String {
        format!("{:08x}", self.to_bits())
    }

    fn from_hex(s: &str) -> Option<Self> {
        u32::from_str_radix(s, 16).ok().map(f32::from_bits)
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const HEX_WIDTH: usize = 16;

    fn to_hex(self) -> String {
        format!("{:016x}", self.to_bits())
    }

    fn from_hex(s: &str) -> Option<Self> {
        u64::from_str_radix(s, 16).ok().map(f64::from_bits)
    }
}

/// Row-major dense matrix. Rows index the batch, columns the features.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, NnError> {
        if rows * cols != data.len() {
            return Err(NnError::Shape(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Stack column blocks side by side: `[a | b]`.
    pub fn hconcat(a: &Self, b: &Self) -> Result<Self, NnError> {
        if a.rows != b.rows {
            return Err(NnError::Shape(format!(
                "cannot concatenate {} rows with {} rows",
                a.rows, b.rows
            )));
        }
        let cols = a.cols + b.cols;
        let mut out = Vec::with_capacity(a.rows * cols);
        for r in 0..a.rows {
            out.extend_from_slice(a.row(r));
            out.extend_from_slice(b.row(r));
        }
        Ok(Matrix {
            rows: a.rows,
            cols,
            data: out,
        })
    }

    /// Split columns at `at` into `(left, right)`.
    pub fn hsplit(&self, at: usize) -> (Self, Self) {
        let mut left = Self::zeros(self.rows, at);
        let mut right = Self::zeros(self.rows, self.cols - at);
        for r in 0..self.rows {
            let row = self.row(r);
            left.row_mut(r).copy_from_slice(&row[..at]);
            right.row_mut(r).copy_from_slice(&row[at..]);
        }
        (left, right)
    }

    /// Gather a subset of rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut out = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            out.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data: out,
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `y = x * w + bias`, skipping zero entries of `x` (inputs are sparse
    /// fingerprints or post-ReLU activations).
    pub fn affine(x: &Self, w: &Self, bias: &[T]) -> Result<Self, NnError> {
        if x.cols != w.rows || bias.len() != w.cols {
            return Err(NnError::Shape(format!(
                "input {}x{} incompatible with weight {}x{}",
                x.rows, x.cols, w.rows, w.cols
            )));
        }
        let mut y = Self::zeros(x.rows, w.cols);
        for r in 0..x.rows {
            let yr = &mut y.data[r * w.cols..(r + 1) * w.cols];
            yr.copy_from_slice(bias);
            for (k, &a) in x.row(r).iter().enumerate() {
                if a != T::zero() {
                    axpy(yr, a, w.row(k));
                }
            }
        }
        Ok(y)
    }

    /// `self += x^T * dy`, skipping zero entries of `x`.
    pub fn accumulate_xt_dy(&mut self, x: &Self, dy: &Self) {
        debug_assert_eq!(self.rows, x.cols);
        debug_assert_eq!(self.cols, dy.cols);
        for r in 0..x.rows {
            let g = dy.row(r);
            for (k, &a) in x.row(r).iter().enumerate() {
                if a != T::zero() {
                    axpy(&mut self.data[k * self.cols..(k + 1) * self.cols], a, g);
                }
            }
        }
    }

    /// `dy * w^T`.
    pub fn matmul_transposed(dy: &Self, w: &Self) -> Self {
        debug_assert_eq!(dy.cols, w.cols);
        let wt = w.transpose();
        let mut dx = Self::zeros(dy.rows, w.rows);
        for r in 0..dy.rows {
            let out = &mut dx.data[r * w.rows..(r + 1) * w.rows];
            for (j, &g) in dy.row(r).iter().enumerate() {
                if g != T::zero() {
                    axpy(out, g, wt.row(j));
                }
            }
        }
        dx
    }

    /// Plain product `a * b`.
    pub fn matmul(a: &Self, b: &Self) -> Result<Self, NnError> {
        let zero_bias = vec![T::zero(); b.cols];
        Self::affine(a, b, &zero_bias)
    }

    /// Column sums accumulated into `out`.
    pub fn accumulate_col_sums(&self, out: &mut [T]) {
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
    }
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_naive() {
        let x = Matrix::from_vec(2, 3, vec![1.0, 0.0, 2.0, -1.0, 3.0, 0.5]).unwrap();
        let w = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = Matrix::affine(&x, &w, &[0.5, -0.5]).unwrap();
        assert_eq!(y.as_slice(), &[11.5, 13.5, 11.0, 12.5]);
        let dx = Matrix::matmul_transposed(&y, &w);
        assert_eq!(dx.get(0, 0), 11.5 + 2.0 * 13.5);
        let mut gw = Matrix::<f64>::zeros(3, 2);
        gw.accumulate_xt_dy(&x, &y);
        assert_eq!(gw.get(2, 1), 2.0 * 13.5 + 0.5 * 12.5);
    }

    #[test]
    fn shape_errors() {
        let x = Matrix::<f32>::zeros(2, 3);
        let w = Matrix::<f32>::zeros(4, 2);
        assert!(Matrix::affine(&x, &w, &[0.0, 0.0]).is_err());
        assert!(Matrix::<f32>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn hex_roundtrip() {
        for v in [0.0f32, -0.0, 1.5, f32::MIN_POSITIVE, 3.1e-20] {
            assert_eq!(f32::from_hex(&v.to_hex()).unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(1.0f32.to_hex(), "3f800000");
    }
}
