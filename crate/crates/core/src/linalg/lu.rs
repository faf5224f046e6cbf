//! Blocked dense LU with partial pivoting.

use serde::{Deserialize, Serialize};

use super::dense::{gemm_raw, Mat};
use super::SolveMode;
use crate::error::{Result, SlabError};

const BLOCK: usize = 64;

/// Packed `P·A = L·U` factors: unit lower `L` below the diagonal, `U` on and above.
///
/// `piv[k]` is the row exchanged with row `k` at step `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseLu {
    lu: Mat,
    piv: Vec<usize>,
}

/// Factors a square matrix. A pivot that is exactly zero after row exchanges is
/// reported with its column index.
pub fn dense_lu(a: &Mat) -> Result<DenseLu> {
    DenseLu::factor(a.clone())
}

impl DenseLu {
    pub fn factor(mut a: Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(SlabError::DimensionMismatch {
                context: "dense_lu (square)",
                expected: a.rows(),
                actual: a.cols(),
            });
        }
        if a.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(SlabError::invalid("dense_lu: non-finite entry"));
        }
        let n = a.rows();
        let mut piv = vec![0; n];
        let ld = n;
        let mut j0 = 0;
        while j0 < n {
            let jb = BLOCK.min(n - j0);
            let j1 = j0 + jb;
            {
                let d = a.as_mut_slice();
                for k in j0..j1 {
                    // pivot search in column k
                    let col = &d[k * ld..(k + 1) * ld];
                    let (mut p, mut best) = (k, col[k].abs());
                    for (i, v) in col.iter().enumerate().skip(k + 1) {
                        if v.abs() > best {
                            best = v.abs();
                            p = i;
                        }
                    }
                    if best == 0.0 {
                        return Err(SlabError::Singular { column: k });
                    }
                    piv[k] = p;
                    if p != k {
                        for c in 0..n {
                            d.swap(c * ld + k, c * ld + p);
                        }
                    }
                    let inv = 1.0 / d[k * ld + k];
                    for v in &mut d[k * ld + k + 1..(k + 1) * ld] {
                        *v *= inv;
                    }
                    // rank-1 update restricted to the panel
                    for c in k + 1..j1 {
                        let akc = d[c * ld + k];
                        if akc != 0.0 {
                            let (left, right) = d.split_at_mut(c * ld);
                            let lcol = &left[k * ld + k + 1..(k + 1) * ld];
                            for (x, l) in right[k + 1..ld].iter_mut().zip(lcol) {
                                *x -= l * akc;
                            }
                        }
                    }
                }
                if j1 < n {
                    // U12 = L11⁻¹ A12
                    for c in j1..n {
                        for k in j0..j1 {
                            let x = d[c * ld + k];
                            if x != 0.0 {
                                for i in k + 1..j1 {
                                    d[c * ld + i] -= d[k * ld + i] * x;
                                }
                            }
                        }
                    }
                    // A22 -= L21 · U12
                    let m = n - j1;
                    let ptr = d.as_mut_ptr();
                    // SAFETY: the three sub-blocks are disjoint regions of `d`.
                    unsafe {
                        gemm_raw(
                            m,
                            jb,
                            m,
                            -1.0,
                            ptr.add(j0 * ld + j1),
                            1,
                            ld as isize,
                            ptr.add(j1 * ld + j0),
                            1,
                            ld as isize,
                            1.0,
                            ptr.add(j1 * ld + j1),
                            1,
                            ld as isize,
                        );
                    }
                }
            }
            j0 = j1;
        }
        Ok(Self { lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    /// Packed factors (stored scalars).
    pub fn packed(&self) -> &Mat {
        &self.lu
    }

    pub fn pivots(&self) -> &[usize] {
        &self.piv
    }

    pub fn l(&self) -> Mat {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.lu[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn u(&self) -> Mat {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| if i <= j { self.lu[(i, j)] } else { 0.0 })
    }

    /// Row permutation `perm` such that `(P·A)[i, :] = A[perm[i], :]`.
    pub fn row_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.dim()).collect();
        for (k, &p) in self.piv.iter().enumerate() {
            perm.swap(k, p);
        }
        perm
    }

    pub fn solve(&self, b: &Mat, mode: SolveMode) -> Result<Mat> {
        let mut x = b.clone();
        self.solve_in_place(&mut x, mode)?;
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[f64], mode: SolveMode) -> Result<Vec<f64>> {
        let mut x = Mat::column(b);
        self.solve_in_place(&mut x, mode)?;
        Ok(x.into_vec())
    }

    pub fn solve_in_place(&self, b: &mut Mat, mode: SolveMode) -> Result<()> {
        let n = self.dim();
        if b.rows() != n {
            return Err(SlabError::DimensionMismatch {
                context: "dense LU solve",
                expected: n,
                actual: b.rows(),
            });
        }
        match mode {
            SolveMode::Normal => {
                self.apply_row_swaps(b, false);
                trsm(&self.lu, b, Tri::LowerUnit);
                trsm(&self.lu, b, Tri::Upper);
            }
            SolveMode::Adjoint => {
                trsm(&self.lu, b, Tri::UpperT);
                trsm(&self.lu, b, Tri::LowerUnitT);
                self.apply_row_swaps(b, true);
            }
        }
        Ok(())
    }

    fn apply_row_swaps(&self, b: &mut Mat, reverse: bool) {
        let n = b.rows();
        let ncols = b.cols();
        let d = b.as_mut_slice();
        let mut step = |k: usize| {
            let p = self.piv[k];
            if p != k {
                for c in 0..ncols {
                    d.swap(c * n + k, c * n + p);
                }
            }
        };
        if reverse {
            (0..self.piv.len()).rev().for_each(&mut step);
        } else {
            (0..self.piv.len()).for_each(&mut step);
        }
    }
}

#[derive(Clone, Copy)]
enum Tri {
    LowerUnit,
    Upper,
    UpperT,
    LowerUnitT,
}

/// Blocked triangular solve with the packed factor `f` applied from the left.
fn trsm(f: &Mat, b: &mut Mat, kind: Tri) {
    let n = f.rows();
    let nrhs = b.cols();
    if n == 0 || nrhs == 0 {
        return;
    }
    let fd = f.as_slice();
    let at = |i: usize, j: usize| fd[j * n + i];
    let bd = b.as_mut_slice();
    let blocks: Vec<(usize, usize)> = (0..n)
        .step_by(BLOCK)
        .map(|k0| (k0, (k0 + BLOCK).min(n)))
        .collect();
    let forward = matches!(kind, Tri::LowerUnit | Tri::UpperT);
    let order: Box<dyn Iterator<Item = &(usize, usize)>> = if forward {
        Box::new(blocks.iter())
    } else {
        Box::new(blocks.iter().rev())
    };
    for &(k0, k1) in order {
        for c in 0..nrhs {
            let x = &mut bd[c * n..(c + 1) * n];
            match kind {
                Tri::LowerUnit => {
                    for k in k0..k1 {
                        let xk = x[k];
                        if xk != 0.0 {
                            for i in k + 1..k1 {
                                x[i] -= at(i, k) * xk;
                            }
                        }
                    }
                }
                Tri::Upper => {
                    for k in (k0..k1).rev() {
                        x[k] /= at(k, k);
                        let xk = x[k];
                        if xk != 0.0 {
                            for i in k0..k {
                                x[i] -= at(i, k) * xk;
                            }
                        }
                    }
                }
                Tri::UpperT => {
                    for k in k0..k1 {
                        let mut s = x[k];
                        for i in k0..k {
                            s -= at(i, k) * x[i];
                        }
                        x[k] = s / at(k, k);
                    }
                }
                Tri::LowerUnitT => {
                    for k in (k0..k1).rev() {
                        let mut s = x[k];
                        for i in k + 1..k1 {
                            s -= at(i, k) * x[i];
                        }
                        x[k] = s;
                    }
                }
            }
        }
        let kb = k1 - k0;
        let bp = bd.as_mut_ptr();
        let fp = fd.as_ptr();
        let ld = n as isize;
        // SAFETY: the solved rows [k0, k1) and the updated rows are disjoint.
        unsafe {
            match kind {
                Tri::LowerUnit if k1 < n => gemm_raw(
                    n - k1,
                    kb,
                    nrhs,
                    -1.0,
                    fp.add(k0 * n + k1),
                    1,
                    ld,
                    bp.add(k0),
                    1,
                    ld,
                    1.0,
                    bp.add(k1),
                    1,
                    ld,
                ),
                Tri::UpperT if k1 < n => gemm_raw(
                    n - k1,
                    kb,
                    nrhs,
                    -1.0,
                    fp.add(k1 * n + k0),
                    ld,
                    1,
                    bp.add(k0),
                    1,
                    ld,
                    1.0,
                    bp.add(k1),
                    1,
                    ld,
                ),
                Tri::Upper if k0 > 0 => gemm_raw(
                    k0,
                    kb,
                    nrhs,
                    -1.0,
                    fp.add(k0 * n),
                    1,
                    ld,
                    bp.add(k0),
                    1,
                    ld,
                    1.0,
                    bp,
                    1,
                    ld,
                ),
                Tri::LowerUnitT if k0 > 0 => gemm_raw(
                    k0,
                    kb,
                    nrhs,
                    -1.0,
                    fp.add(k0),
                    ld,
                    1,
                    bp.add(k0),
                    1,
                    ld,
                    1.0,
                    bp,
                    1,
                    ld,
                ),
                _ => {}
            }
        }
    }
}

/// Solves `R·X = B` in place for an upper-triangular `R` (used by QR least squares).
pub(crate) fn solve_upper(r: &Mat, b: &mut Mat) {
    trsm(r, b, Tri::Upper);
}

/// Solves `Rᵀ·X = B` in place for an upper-triangular `R`.
pub(crate) fn solve_upper_t(r: &Mat, b: &mut Mat) {
    trsm(r, b, Tri::UpperT);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_has_trivial_factors() {
        let f = dense_lu(&Mat::identity(5)).unwrap();
        assert_eq!(f.l(), Mat::identity(5));
        assert_eq!(f.u(), Mat::identity(5));
        assert_eq!(f.pivots(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn permutation_matrix_is_pivoted() {
        let a = Mat::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let f = dense_lu(&a).unwrap();
        let x = f.solve_vec(&[1.0, 2.0], SolveMode::Normal).unwrap();
        assert_eq!(x, vec![2.0, 1.0]);
    }

    #[test]
    fn zero_pivot_reports_column() {
        let a = Mat::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[0.0, 0.0, 1.0]]);
        match dense_lu(&a) {
            Err(SlabError::Singular { column }) => assert_eq!(column, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn backward_error_on_random_matrices() {
        for &n in &[50, 150] {
            let a = random(n, n, n as u64);
            let f = dense_lu(&a).unwrap();
            let pa = a.select_rows(&f.row_permutation());
            let lu = f.l().matmul(&f.u());
            let rel = pa.sub(&lu).norm_fro() / a.norm_fro();
            assert!(rel <= 1e-13, "n = {n}: {rel:e}");
        }
    }

    #[test]
    fn both_solve_modes_match_residuals() {
        let n = 200;
        let mut a = random(n, n, 7);
        for i in 0..n {
            a[(i, i)] += 4.0;
        }
        let b = random(n, 70, 8);
        let f = dense_lu(&a).unwrap();
        let x = f.solve(&b, SolveMode::Normal).unwrap();
        let r = a.matmul(&x).sub(&b).norm_fro() / b.norm_fro();
        assert!(r < 1e-12, "{r:e}");
        let xt = f.solve(&b, SolveMode::Adjoint).unwrap();
        let rt = a.t_matmul(&xt).sub(&b).norm_fro() / b.norm_fro();
        assert!(rt < 1e-12, "{rt:e}");
    }

    #[test]
    fn adjoint_equals_normal_for_symmetric() {
        let n = 40;
        let g = random(n, n, 3);
        let mut a = g.add(&g.transpose());
        for i in 0..n {
            a[(i, i)] += 10.0;
        }
        let f = dense_lu(&a).unwrap();
        let b = random(n, 2, 4);
        let x = f.solve(&b, SolveMode::Normal).unwrap();
        let y = f.solve(&b, SolveMode::Adjoint).unwrap();
        assert!(x.sub(&y).max_abs() < 1e-13);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = dense_lu(&Mat::identity(3)).unwrap();
        assert!(f.solve(&Mat::zeros(4, 1), SolveMode::Normal).is_err());
        assert!(dense_lu(&Mat::zeros(2, 3)).is_err());
    }
}
