//! Column-major dense matrices and the GEMM entry points used everywhere else.

use std::ops::{Index, IndexMut, Range};

use serde::{Deserialize, Serialize};

/// Dense `rows × cols` matrix of `f64`, stored column-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Whether an operand enters a product as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Wraps column-major data. Panics if the length does not match.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "column-major buffer has wrong length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; convenient in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Column vector view of a slice.
    pub fn column(v: &[f64]) -> Self {
        Self::from_col_major(v.len(), 1, v.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
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

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.data[i * self.cols + j] = self.data[j * self.rows + i];
            }
        }
        t
    }

    /// Copy of the sub-block `rows × cols`.
    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> Mat {
        assert!(rows.end <= self.rows && cols.end <= self.cols);
        let mut out = Mat::zeros(rows.len(), cols.len());
        for (jj, j) in cols.enumerate() {
            let src = &self.col(j)[rows.clone()];
            out.col_mut(jj).copy_from_slice(src);
        }
        out
    }

    pub fn cols_range(&self, cols: Range<usize>) -> Mat {
        assert!(cols.end <= self.cols);
        Mat::from_col_major(
            self.rows,
            cols.len(),
            self.data[cols.start * self.rows..cols.end * self.rows].to_vec(),
        )
    }

    pub fn rows_range(&self, rows: Range<usize>) -> Mat {
        self.block(rows, 0..self.cols)
    }

    /// Writes `src` into this matrix with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &Mat) {
        assert!(r0 + src.rows <= self.rows && c0 + src.cols <= self.cols);
        for j in 0..src.cols {
            let r = self.rows;
            let dst = &mut self.data[(c0 + j) * r + r0..(c0 + j) * r + r0 + src.rows];
            dst.copy_from_slice(src.col(j));
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    pub fn select_cols(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, idx.len());
        for (jj, &j) in idx.iter().enumerate() {
            out.col_mut(jj).copy_from_slice(self.col(j));
        }
        out
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Mat {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Mat::from_col_major(self.rows, self.cols + other.cols, data)
    }

    /// Vertical concatenation `[self; other]`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows + other.rows, self.cols);
        out.set_block(0, 0, self);
        out.set_block(self.rows, 0, other);
        out
    }

    pub fn norm_fro(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// `self · other`
    pub fn matmul(&self, other: &Mat) -> Mat {
        mul(self, Op::N, other, Op::N)
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        mul(self, Op::T, other, Op::N)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        mul(self, Op::N, other, Op::T)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (yi, a) in y.iter_mut().zip(self.col(j)) {
                    *yi += a * xj;
                }
            }
        }
        y
    }

    /// Number of stored scalars.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    // scaled accumulation avoids overflow for the 1/h² sized entries
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * s.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `op(a) · op(b)` as a fresh matrix.
pub fn mul(a: &Mat, ta: Op, b: &Mat, tb: Op) -> Mat {
    let m = if ta == Op::N { a.rows } else { a.cols };
    let n = if tb == Op::N { b.cols } else { b.rows };
    let mut c = Mat::zeros(m, n);
    gemm(1.0, a, ta, b, tb, 0.0, &mut c);
    c
}

/// `c ← alpha · op(a) · op(b) + beta · c`.
pub fn gemm(alpha: f64, a: &Mat, ta: Op, b: &Mat, tb: Op, beta: f64, c: &mut Mat) {
    let (m, k) = match ta {
        Op::N => (a.rows, a.cols),
        Op::T => (a.cols, a.rows),
    };
    let (kb, n) = match tb {
        Op::N => (b.rows, b.cols),
        Op::T => (b.cols, b.rows),
    };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((m, n), c.shape(), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.data.iter_mut().for_each(|v| *v = 0.0);
        } else {
            c.scale(beta);
        }
        return;
    }
    let (rsa, csa) = match ta {
        Op::N => (1, a.rows as isize),
        Op::T => (a.rows as isize, 1),
    };
    let (rsb, csb) = match tb {
        Op::N => (1, b.rows as isize),
        Op::T => (b.rows as isize, 1),
    };
    // SAFETY: shapes and strides were checked above; `c` does not alias `a` or `b`
    // because it is borrowed mutably.
    unsafe {
        gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            1,
            c.rows as isize,
        );
    }
}

/// Strided GEMM on raw pointers: `c[m×n] ← alpha·a[m×k]·b[k×n] + beta·c`.
///
/// # Safety
/// All pointers must address valid memory for the given shapes and strides, and
/// `c` must not overlap `a` or `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) unsafe fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: *const f64,
    rsa: isize,
    csa: isize,
    b: *const f64,
    rsb: isize,
    csb: isize,
    beta: f64,
    c: *mut f64,
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        Mat::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
        })
    }

    #[test]
    fn gemm_matches_naive_for_all_transposes() {
        let a = Mat::from_fn(5, 3, |i, j| (i as f64 - 2.0 * j as f64).sin());
        let b = Mat::from_fn(3, 4, |i, j| (1.0 + i as f64 * j as f64).cos());
        let want = naive(&a, &b);
        assert!(a.matmul(&b).sub(&want).max_abs() < 1e-14);
        assert!(a.transpose().t_matmul(&b).sub(&want).max_abs() < 1e-14);
        assert!(a.matmul_t(&b.transpose()).sub(&want).max_abs() < 1e-14);
        let both = mul(&a.transpose(), Op::T, &b.transpose(), Op::T);
        assert!(both.sub(&want).max_abs() < 1e-14);
    }

    #[test]
    fn block_helpers_round_trip() {
        let a = Mat::from_fn(4, 5, |i, j| (10 * i + j) as f64);
        let b = a.block(1..3, 2..5);
        assert_eq!(b[(0, 0)], 12.0);
        assert_eq!(b[(1, 2)], 24.0);
        let mut z = Mat::zeros(4, 5);
        z.set_block(1, 2, &b);
        assert_eq!(z[(2, 4)], 24.0);
        assert_eq!(a.hstack(&a).cols(), 10);
        assert_eq!(a.vstack(&a).rows(), 8);
        assert_eq!(a.transpose()[(3, 2)], a[(2, 3)]);
    }

    #[test]
    fn norm_handles_large_entries() {
        let v = [3e200, 4e200];
        assert!((norm2(&v) - 5e200).abs() / 5e200 < 1e-15);
        assert_eq!(norm2(&[0.0, 0.0]), 0.0);
    }
}
