//! Householder QR, with and without column pivoting.

use super::dense::{norm2, Mat};
use super::lu;

/// Householder vector for `x`: returns `(beta, tau)` such that
/// `(I − tau·v·vᵀ)·x = beta·e₁` with `v[0] = 1` stored over `x[1..]`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let xnorm = norm2(&x[1..]);
    if xnorm == 0.0 {
        return (alpha, 0.0);
    }
    let mut beta = -alpha.signum() * alpha.hypot(xnorm);
    if alpha == 0.0 {
        beta = -xnorm;
    }
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (beta, tau)
}

/// Applies `I − tau·v·vᵀ` (with `v = [1; tail]`) to rows `k..` of column `col`.
fn reflect(tail: &[f64], tau: f64, col: &mut [f64]) {
    let mut s = col[0];
    for (c, v) in col[1..].iter().zip(tail) {
        s += c * v;
    }
    s *= tau;
    col[0] -= s;
    for (c, v) in col[1..].iter_mut().zip(tail) {
        *c -= s * v;
    }
}

/// Compact Householder QR of an `m × n` matrix.
#[derive(Clone, Debug)]
pub struct Qr {
    qr: Mat,
    tau: Vec<f64>,
}

impl Qr {
    pub fn new(mut a: Mat) -> Self {
        let (m, n) = a.shape();
        let kmax = m.min(n);
        let mut tau = Vec::with_capacity(kmax);
        for k in 0..kmax {
            let (t, rest) = {
                let d = a.as_mut_slice();
                let (head, rest) = d.split_at_mut((k + 1) * m);
                let col = &mut head[k * m + k..];
                let (_, t) = householder(col);
                (t, (col[1..].to_vec(), rest))
            };
            tau.push(t);
            if t != 0.0 {
                let (v, rest) = rest;
                for c in 0..n - k - 1 {
                    reflect(&v, t, &mut rest[c * m + k..(c + 1) * m]);
                }
            }
        }
        Self { qr: a, tau }
    }

    pub fn rows(&self) -> usize {
        self.qr.rows()
    }

    /// Upper-trapezoidal `R`, `min(m, n) × n`.
    pub fn r(&self) -> Mat {
        let (m, n) = self.qr.shape();
        Mat::from_fn(m.min(n), n, |i, j| if i <= j { self.qr[(i, j)] } else { 0.0 })
    }

    /// `b ← Qᵀ·b`.
    pub fn apply_qt(&self, b: &mut Mat) {
        let m = self.rows();
        assert_eq!(b.rows(), m);
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let v = &self.qr.col(k)[k + 1..];
            for c in 0..b.cols() {
                reflect(v, t, &mut b.col_mut(c)[k..]);
            }
        }
    }

    /// `b ← Q·b`.
    pub fn apply_q(&self, b: &mut Mat) {
        let m = self.rows();
        assert_eq!(b.rows(), m);
        for (k, &t) in self.tau.iter().enumerate().rev() {
            if t == 0.0 {
                continue;
            }
            let v = &self.qr.col(k)[k + 1..];
            for c in 0..b.cols() {
                reflect(v, t, &mut b.col_mut(c)[k..]);
            }
        }
    }

    /// Leading `cols` columns of the full orthogonal factor.
    pub fn q_cols(&self, cols: usize) -> Mat {
        let m = self.rows();
        let mut q = Mat::from_fn(m, cols, |i, j| if i == j { 1.0 } else { 0.0 });
        self.apply_q(&mut q);
        q
    }

    pub fn q_thin(&self) -> Mat {
        self.q_cols(self.tau.len())
    }

    pub fn q_full(&self) -> Mat {
        self.q_cols(self.rows())
    }

    /// Minimum-norm solution of the underdetermined system `Aᵀ·x = b` when `A`
    /// (the factored matrix) is tall with full column rank: `x = Q·R⁻ᵀ·b`.
    pub fn solve_transposed_min_norm(&self, b: &Mat) -> Mat {
        let (m, n) = self.qr.shape();
        assert!(m >= n);
        assert_eq!(b.rows(), n);
        let r = self.r();
        let mut y = b.clone();
        lu::solve_upper_t(&r, &mut y);
        let mut x = Mat::zeros(m, b.cols());
        x.set_block(0, 0, &y);
        self.apply_q(&mut x);
        x
    }
}

/// Result of a truncated column-pivoted QR: an orthonormal basis for the
/// numerically significant column space.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// Orthonormal `m × rank` basis.
    pub q: Mat,
    /// `rank × n` upper-trapezoidal factor in pivoted column order.
    pub r: Mat,
    /// Column order: column `j` of `A·P` is column `perm[j]` of `A`.
    pub perm: Vec<usize>,
    /// Absolute values of the diagonal of `R` for the accepted steps.
    pub r_diag: Vec<f64>,
}

impl PivotedQr {
    pub fn rank(&self) -> usize {
        self.q.cols()
    }
}

/// Column-pivoted Householder QR halted when the largest remaining column
/// norm drops to `abs_tol` or below, or after `max_rank` steps.
pub fn pivoted_qr(a: &Mat, max_rank: usize, abs_tol: f64) -> PivotedQr {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| norm2(w.col(j))).collect();
    let mut ref_norms = norms.clone();
    let kmax = m.min(n).min(max_rank);
    let mut tau = Vec::with_capacity(kmax);
    let mut r_diag = Vec::new();
    let tol3z = f64::EPSILON.sqrt();
    for k in 0..kmax {
        let (p, &best) = norms[k..]
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, v)| (i + k, v))
            .unwrap();
        if best <= abs_tol || best == 0.0 {
            break;
        }
        if p != k {
            let d = w.as_mut_slice();
            for i in 0..m {
                d.swap(k * m + i, p * m + i);
            }
            perm.swap(k, p);
            norms.swap(k, p);
            ref_norms.swap(k, p);
        }
        let d = w.as_mut_slice();
        let (head, rest) = d.split_at_mut((k + 1) * m);
        let col = &mut head[k * m + k..];
        let (beta, t) = householder(col);
        r_diag.push(beta.abs());
        tau.push(t);
        let v = col[1..].to_vec();
        for c in 0..n - k - 1 {
            let cc = &mut rest[c * m..(c + 1) * m];
            if t != 0.0 {
                reflect(&v, t, &mut cc[k..]);
            }
            let j = k + 1 + c;
            if norms[j] != 0.0 {
                let ratio = cc[k].abs() / norms[j];
                let temp = (1.0 - ratio * ratio).max(0.0);
                let temp2 = temp * (norms[j] / ref_norms[j]).powi(2);
                if temp2 <= tol3z {
                    norms[j] = norm2(&cc[k + 1..]);
                    ref_norms[j] = norms[j];
                } else {
                    norms[j] *= temp.sqrt();
                }
            }
        }
    }
    let rank = tau.len();
    let mut q = Mat::from_fn(m, rank, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..rank).rev() {
        if tau[k] == 0.0 {
            continue;
        }
        let v = &w.col(k)[k + 1..];
        for c in 0..rank {
            reflect(v, tau[k], &mut q.col_mut(c)[k..]);
        }
    }
    let r = Mat::from_fn(rank, n, |i, j| if i <= j { w[(i, j)] } else { 0.0 });
    PivotedQr { q, r, perm, r_diag }
}
