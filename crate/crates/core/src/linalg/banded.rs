//! Compact band storage and banded LU with partial pivoting.
//!
//! The factorization keeps `U` in a row-major `n × (kl + ku + 1)` array (row `i`
//! holds `U[i, i..i + kl + ku + 1]` after fill-in) and the multipliers of `L` in a
//! separate `n × kl` array. Right-hand sides are handled row-major so that every
//! elimination step is a contiguous row update.

use serde::{Deserialize, Serialize};

use super::dense::Mat;
use super::SolveMode;
use crate::error::{Result, SlabError};

/// Columns solved together when a column-major block is pushed through the factors.
const RHS_CHUNK: usize = 48;

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Entry `(i, j)` with `-kl ≤ j - i ≤ ku` lives at `data[i * width + (j + kl - i)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    /// Band part of a dense matrix; entries outside the band are ignored.
    pub fn from_dense(a: &Mat, kl: usize, ku: usize) -> Self {
        let n = a.rows();
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                m.set(i, j, a[(i, j)]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    /// Stores `v` at `(i, j)`. Panics if the position is outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    pub fn to_dense(&self) -> Mat {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + 1).min(self.n);
                (lo..hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }
}

/// Banded LU factors with partial pivoting (row interchanges within the band).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// `U` rows, `n × (kl + ku + 1)`, leading entry is the diagonal.
    u: Vec<f64>,
    /// Multipliers, `n × kl`.
    l: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Factors the band matrix. An exactly-zero pivot yields [`SlabError::Singular`].
    pub fn factor(a: BandedMatrix) -> Result<Self> {
        if a.data.iter().any(|v| !v.is_finite()) {
            return Err(SlabError::invalid("banded LU: non-finite entry"));
        }
        let BandedMatrix { n, kl, ku, data } = a;
        let mm = kl + ku + 1;
        let mut u = data;
        let mut l = vec![0.0; n * kl];
        let mut piv = vec![0; n];

        // Left-align the first kl rows, whose band starts before column 0.
        let mut shift = kl;
        for i in 0..kl.min(n) {
            let row = &mut u[i * mm..(i + 1) * mm];
            row.copy_within(shift..mm, 0);
            for v in &mut row[mm - shift..] {
                *v = 0.0;
            }
            shift -= 1;
        }
        let mut last = kl.min(n);
        for k in 0..n {
            if last < n {
                last += 1;
            }
            let mut p = k;
            let mut best = u[k * mm].abs();
            for j in k + 1..last {
                let v = u[j * mm].abs();
                if v > best {
                    best = v;
                    p = j;
                }
            }
            piv[k] = p;
            if best == 0.0 {
                return Err(SlabError::Singular { column: k });
            }
            if p != k {
                let (head, tail) = u.split_at_mut(p * mm);
                head[k * mm..(k + 1) * mm].swap_with_slice(&mut tail[..mm]);
            }
            let (head, tail) = u.split_at_mut((k + 1) * mm);
            let pivot_row = &head[k * mm..];
            let inv = 1.0 / pivot_row[0];
            for i in k + 1..last {
                let row = &mut tail[(i - k - 1) * mm..(i - k) * mm];
                let m = row[0] * inv;
                l[k * kl + i - k - 1] = m;
                for j in 1..mm {
                    row[j - 1] = row[j] - m * pivot_row[j];
                }
                row[mm - 1] = 0.0;
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            u,
            l,
            piv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Number of stored floating-point scalars (`U` band plus multipliers).
    pub fn stored_scalars(&self) -> usize {
        self.u.len() + self.l.len()
    }

    /// Solves in place for `c` right-hand sides stored row-major (`b[row * c + col]`).
    pub fn solve_rows_in_place(&self, b: &mut [f64], c: usize, mode: SolveMode) -> Result<()> {
        if b.len() != self.n * c {
            return Err(SlabError::DimensionMismatch {
                context: "banded LU solve",
                expected: self.n * c,
                actual: b.len(),
            });
        }
        if c == 0 || self.n == 0 {
            return Ok(());
        }
        match mode {
            SolveMode::Normal => self.solve_normal(b, c),
            SolveMode::Adjoint => self.solve_adjoint(b, c),
        }
        Ok(())
    }

    fn solve_normal(&self, b: &mut [f64], c: usize) {
        let (n, kl, mm) = (self.n, self.kl, self.kl + self.ku + 1);
        let mut last = kl.min(n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                let (head, tail) = b.split_at_mut(p * c);
                head[k * c..(k + 1) * c].swap_with_slice(&mut tail[..c]);
            }
            if last < n {
                last += 1;
            }
            let (head, tail) = b.split_at_mut((k + 1) * c);
            let bk = &head[k * c..];
            for i in k + 1..last {
                let m = self.l[k * kl + i - k - 1];
                if m != 0.0 {
                    let bi = &mut tail[(i - k - 1) * c..(i - k) * c];
                    for (x, y) in bi.iter_mut().zip(bk) {
                        *x -= m * y;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            let urow = &self.u[i * mm..(i + 1) * mm];
            let (head, tail) = b.split_at_mut((i + 1) * c);
            let bi = &mut head[i * c..];
            let reach = (n - i).min(mm);
            for k in 1..reach {
                let coef = urow[k];
                if coef != 0.0 {
                    let bj = &tail[(k - 1) * c..k * c];
                    for (x, y) in bi.iter_mut().zip(bj) {
                        *x -= coef * y;
                    }
                }
            }
            let inv = 1.0 / urow[0];
            for x in bi.iter_mut() {
                *x *= inv;
            }
        }
    }

    fn solve_adjoint(&self, b: &mut [f64], c: usize) {
        let (n, kl, mm) = (self.n, self.kl, self.kl + self.ku + 1);
        // Uᵀ y = b, column-oriented
        for i in 0..n {
            let urow = &self.u[i * mm..(i + 1) * mm];
            let (head, tail) = b.split_at_mut((i + 1) * c);
            let bi = &mut head[i * c..];
            let inv = 1.0 / urow[0];
            for x in bi.iter_mut() {
                *x *= inv;
            }
            let reach = (n - i).min(mm);
            for k in 1..reach {
                let coef = urow[k];
                if coef != 0.0 {
                    let bj = &mut tail[(k - 1) * c..k * c];
                    for (x, y) in bj.iter_mut().zip(bi.iter()) {
                        *x -= coef * y;
                    }
                }
            }
        }
        // apply (L_k P_k)ᵀ for k descending
        for k in (0..n).rev() {
            let last = (k + 1 + kl).min(n);
            let (head, tail) = b.split_at_mut((k + 1) * c);
            let bk = &mut head[k * c..];
            for i in k + 1..last {
                let m = self.l[k * kl + i - k - 1];
                if m != 0.0 {
                    let bi = &tail[(i - k - 1) * c..(i - k) * c];
                    for (x, y) in bk.iter_mut().zip(bi) {
                        *x -= m * y;
                    }
                }
            }
            let p = self.piv[k];
            if p != k {
                let (head, tail) = b.split_at_mut(p * c);
                head[k * c..(k + 1) * c].swap_with_slice(&mut tail[..c]);
            }
        }
    }

    /// Solves for every column of a column-major block, in chunks of columns.
    pub fn solve(&self, rhs: &Mat, mode: SolveMode) -> Result<Mat> {
        let n = self.n;
        if rhs.rows() != n {
            return Err(SlabError::DimensionMismatch {
                context: "banded LU solve",
                expected: n,
                actual: rhs.rows(),
            });
        }
        let mut out = Mat::zeros(n, rhs.cols());
        let mut buf = Vec::new();
        let mut c0 = 0;
        while c0 < rhs.cols() {
            let c = RHS_CHUNK.min(rhs.cols() - c0);
            buf.clear();
            buf.resize(n * c, 0.0);
            for j in 0..c {
                for (i, v) in rhs.col(c0 + j).iter().enumerate() {
                    buf[i * c + j] = *v;
                }
            }
            self.solve_rows_in_place(&mut buf, c, mode)?;
            for j in 0..c {
                let col = out.col_mut(c0 + j);
                for (i, v) in col.iter_mut().enumerate() {
                    *v = buf[i * c + j];
                }
            }
            c0 += c;
        }
        Ok(out)
    }

    pub fn solve_vec(&self, b: &[f64], mode: SolveMode) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_rows_in_place(&mut x, 1, mode)?;
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_lu;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64, diag: f64) -> BandedMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                a.set(i, j, rng.random_range(-1.0..1.0) + if i == j { diag } else { 0.0 });
            }
        }
        a
    }

    #[test]
    fn storage_round_trip() {
        let a = random_band(9, 2, 3, 1, 0.0);
        let d = a.to_dense();
        assert_eq!(BandedMatrix::from_dense(&d, 2, 3), a);
        assert_eq!(d[(0, 4)], 0.0);
        assert_eq!(d[(5, 2)], 0.0);
        let x: Vec<f64> = (0..9).map(|i| i as f64).collect();
        assert_eq!(a.matvec(&x), d.matvec(&x));
    }

    #[test]
    fn pivoting_is_required_and_handled() {
        // zero diagonal forces row interchanges
        let mut a = BandedMatrix::zeros(6, 1, 1);
        for i in 0..6 {
            if i > 0 {
                a.set(i, i - 1, 1.0);
            }
            if i + 1 < 6 {
                a.set(i, i + 1, 2.0);
            }
        }
        let d = a.to_dense();
        let f = BandedLu::factor(a).unwrap();
        let b: Vec<f64> = (1..=6).map(f64::from).collect();
        let x = f.solve_vec(&b, SolveMode::Normal).unwrap();
        let r: f64 = d.matvec(&x).iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn singular_band_is_reported() {
        let mut a = BandedMatrix::zeros(4, 1, 1);
        a.set(0, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(3, 3, 1.0);
        assert!(matches!(
            BandedLu::factor(a),
            Err(SlabError::Singular { column: 2 })
        ));
    }

    #[test]
    fn matches_dense_lu_on_wide_rhs() {
        let a = random_band(120, 7, 7, 5, 0.5);
        let d = a.to_dense();
        let f = BandedLu::factor(a).unwrap();
        let dl = dense_lu(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rhs = Mat::from_fn(120, 130, |_, _| rng.random_range(-1.0..1.0));
        for mode in [SolveMode::Normal, SolveMode::Adjoint] {
            let x = f.solve(&rhs, mode).unwrap();
            let y = dl.solve(&rhs, mode).unwrap();
            let rel = x.sub(&y).norm_fro() / y.norm_fro();
            assert!(rel < 1e-10, "{mode:?}: {rel:e}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn residual_small_for_random_bands(
            n in 1usize..60, kl in 0usize..5, ku in 0usize..5, seed in 0u64..1000
        ) {
            let a = random_band(n, kl, ku, seed, 3.0);
            let d = a.to_dense();
            let f = BandedLu::factor(a).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
            let x = f.solve_vec(&b, SolveMode::Normal).unwrap();
            let r = d.matvec(&x);
            let err: f64 = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-10);
            let xt = f.solve_vec(&b, SolveMode::Adjoint).unwrap();
            let rt = d.transpose().matvec(&xt);
            let errt: f64 = rt.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            prop_assert!(errt < 1e-10);
        }
    }
}
