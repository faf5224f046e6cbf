//! Brute-force reference computations.
//!
//! Everything here works on explicitly extracted dense submatrices and plain
//! dense LU, independent of the banded strip factorizations, so agreement with
//! the solver is evidence rather than tautology. The one exception is
//! [`dense_schur_block`], which deliberately materialises a reduced block
//! through the matrix-free apply.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::linalg::{dense_lu, numerical_rank, solve_upper, Mat, SolveMode};
use crate::problem::{CsrMatrix, SparseSystem};
use crate::stage_one::{Side, SlabPartition, StageOne};

/// Largest system handled by the dense oracles.
pub const DENSE_ORACLE_LIMIT: usize = 10_000;

/// Largest interface materialised by [`dense_schur_block`].
pub const DENSE_BLOCK_LIMIT: usize = 4096;

fn guard(size: usize, limit: usize) -> Result<()> {
    if size > limit {
        return Err(SlabError::OracleGuard { size, limit });
    }
    Ok(())
}

/// Dense submatrix `A[rows, cols]` extracted from a sparse matrix.
pub fn select_dense(a: &CsrMatrix, rows: &[usize], cols: &[usize]) -> Mat {
    let mut pos = vec![usize::MAX; a.ncols()];
    for (k, &c) in cols.iter().enumerate() {
        pos[c] = k;
    }
    let mut m = Mat::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        let (idx, vals) = a.row(r);
        for (&c, &v) in idx.iter().zip(vals) {
            if pos[c] != usize::MAX {
                m[(i, pos[c])] += v;
            }
        }
    }
    m
}

/// Dense LU solution of the full system (`N ≤ 10⁴`).
pub fn dense_full_solve(system: &SparseSystem) -> Result<Vec<f64>> {
    dense_solve(&system.matrix, &Mat::column(&system.rhs)).map(Mat::into_vec)
}

/// Dense LU solution for a multi-column right-hand side (`N ≤ 10⁴`).
pub fn dense_solve(a: &CsrMatrix, rhs: &Mat) -> Result<Mat> {
    guard(a.nrows(), DENSE_ORACLE_LIMIT)?;
    dense_lu(&a.to_dense())?.solve(rhs, SolveMode::Normal)
}

/// `A_JJ − A_JI·A_II⁻¹·A_IJ` for arbitrary disjoint index sets.
pub fn schur_complement(a: &CsrMatrix, jset: &[usize], iset: &[usize]) -> Result<Mat> {
    guard(iset.len(), DENSE_ORACLE_LIMIT)?;
    let ajj = select_dense(a, jset, jset);
    if iset.is_empty() {
        return Ok(ajj);
    }
    let lu = dense_lu(&select_dense(a, iset, iset))?;
    let x = lu.solve(&select_dense(a, iset, jset), SolveMode::Normal)?;
    Ok(ajj.sub(&select_dense(a, jset, iset).matmul(&x)))
}

/// All interface indices, interfaces left to right.
pub fn interface_indices(part: &SlabPartition) -> Vec<usize> {
    (0..part.num_interfaces()).flat_map(|j| part.interface_range(j)).collect()
}

/// The whole reduced matrix by dense elimination of every strip unknown at once.
pub fn dense_reduced_matrix(a: &CsrMatrix, part: &SlabPartition) -> Result<Mat> {
    guard(a.nrows(), DENSE_ORACLE_LIMIT)?;
    let jset = interface_indices(part);
    let mut is_j = vec![false; a.nrows()];
    for &g in &jset {
        is_j[g] = true;
    }
    let iset: Vec<usize> = (0..a.nrows()).filter(|&g| !is_j[g]).collect();
    schur_complement(a, &jset, &iset)
}

/// Interface of `strip` on `side`.
fn strip_interface(part: &SlabPartition, strip: usize, side: Side) -> Result<usize> {
    let st = part
        .strips
        .get(strip)
        .ok_or_else(|| SlabError::invalid(format!("no strip {strip}")))?;
    match side {
        Side::Left => st.left,
        Side::Right => st.right,
    }
    .ok_or_else(|| SlabError::invalid(format!("strip {strip} has no {side:?} interface")))
}

/// Schur complement of one interface against the interior of one adjacent
/// strip only: `T₁₁ = A₁₁ − A₁₂·A₂₂⁻¹·A₂₁`.
pub fn single_strip_schur(a: &CsrMatrix, part: &SlabPartition, strip: usize, side: Side) -> Result<Mat> {
    let j = strip_interface(part, strip, side)?;
    let jset: Vec<usize> = part.interface_range(j).collect();
    schur_complement(a, &jset, &part.strips[strip].global_indices())
}

/// Materialises `T_jk` by applying the matrix-free block to the identity.
pub fn dense_schur_block(stage: &StageOne, j: usize, k: usize) -> Result<Mat> {
    let n2 = stage.partition().n2;
    guard(n2, DENSE_BLOCK_LIMIT)?;
    stage.apply_t_block(j, k, &Mat::identity(n2), SolveMode::Normal)
}

/// Checks that `rows` is a nonempty, strictly increasing run of consecutive
/// interface rows below `n2`.
fn check_contiguous(rows: &[usize], n2: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(SlabError::invalid("J_B must not be empty"));
    }
    if rows.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(SlabError::invalid("J_B must be a contiguous run of interface points"));
    }
    if *rows.last().expect("nonempty") >= n2 {
        return Err(SlabError::invalid(format!("J_B exceeds the interface length {n2}")));
    }
    Ok(())
}

fn complement(rows: &[usize], n2: usize) -> Vec<usize> {
    (0..n2).filter(|r| !rows.contains(r)).collect()
}

/// Numerical ranks of the off-diagonal blocks of a single-strip Schur complement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCheck {
    /// Rank of `T[B, F]`.
    pub rank_bf: usize,
    /// Rank of `T[F, B]`.
    pub rank_fb: usize,
    /// Ranks of the same blocks of the eliminated part `A_JJ − T`, i.e.
    /// without the sparse stencil couplings across the cuts of `B`.
    /// Reported for diagnosis only; `pass` looks at `T` alone.
    pub schur_rank_bf: usize,
    pub schur_rank_fb: usize,
    /// Twice the strip width.
    pub bound: usize,
    pub pass: bool,
}

/// Ranks of `T[B, F]` and `T[F, B]` (relative tolerance `tol`) for the
/// single-strip Schur complement, where `B = jb` is a contiguous run of
/// interface rows and `F` its complement; passes when both are `≤ 2·width`.
pub fn rank_property_check(
    a: &CsrMatrix,
    part: &SlabPartition,
    strip: usize,
    side: Side,
    jb: &[usize],
    tol: f64,
) -> Result<RankCheck> {
    check_contiguous(jb, part.n2)?;
    let t = single_strip_schur(a, part, strip, side)?;
    let jf = complement(jb, part.n2);
    let bound = 2 * part.strips[strip].width;
    let ranks = |m: &Mat| {
        if jf.is_empty() {
            (0, 0)
        } else {
            (numerical_rank(&m.select(jb, &jf), tol), numerical_rank(&m.select(&jf, jb), tol))
        }
    };
    let (rank_bf, rank_fb) = ranks(&t);
    let iface: Vec<usize> = part.interface_range(strip_interface(part, strip, side)?).collect();
    let (schur_rank_bf, schur_rank_fb) = ranks(&select_dense(a, &iface, &iface).sub(&t));
    Ok(RankCheck {
        rank_bf,
        rank_fb,
        schur_rank_bf,
        schur_rank_fb,
        bound,
        pass: rank_bf <= bound && rank_fb <= bound,
    })
}

/// Explicit low-rank factors of a far-field block of the single-strip Schur
/// complement, built from a separator of the strip interior.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparatorFactors {
    /// `|F| × |γ|`.
    pub x: Mat,
    /// `|γ| × |B|`.
    pub y: Mat,
    /// Interface rows of `B` and `F`.
    pub j_b: Vec<usize>,
    pub j_f: Vec<usize>,
    /// Strip unknowns (global indices) coupled only to `F`, only to `B`, and
    /// the separating rows.
    pub i_alpha: Vec<usize>,
    pub i_beta: Vec<usize>,
    pub i_gamma: Vec<usize>,
    /// `‖T[F,B] − (A[F,B] − X·Y)‖_F / ‖T[F,B]‖_F` (absolute when `T[F,B] = 0`).
    pub residual: f64,
}

/// Splits the strip interior into `α` (rows outside `B`'s span), `β` (rows
/// strictly inside) and the separator `γ` (the first and last row of the
/// span, `2·width` unknowns), then forms
/// `X = (A_Fγ − A_Fα·A_αα⁻¹·A_αγ)·U⁻¹` and
/// `Y = U·S⁻¹·(A_γB − A_γβ·A_ββ⁻¹·A_βB)`, where `S = PᵀLU` is the Schur
/// complement onto `γ`; then `T[F,B] = A[F,B] − X·Y` exactly.
pub fn separator_factors(
    a: &CsrMatrix,
    part: &SlabPartition,
    strip: usize,
    side: Side,
    jb: &[usize],
) -> Result<SeparatorFactors> {
    let n2 = part.n2;
    check_contiguous(jb, n2)?;
    let j = strip_interface(part, strip, side)?;
    let st = part.strips[strip];
    let iface = part.interface_range(j);
    let j_f = complement(jb, n2);
    let (r0, r1) = (jb[0], *jb.last().expect("nonempty"));
    let rows_of = |pred: &dyn Fn(usize) -> bool| -> Vec<usize> {
        (0..st.len()).map(|l| st.global(l)).filter(|&g| pred(g % n2)).collect()
    };
    let i_gamma = rows_of(&|r| r == r0 || r == r1);
    let i_beta = rows_of(&|r| r > r0 && r < r1);
    let i_alpha = rows_of(&|r| r < r0 || r > r1);
    let gb: Vec<usize> = jb.iter().map(|&r| iface.start + r).collect();
    let gf: Vec<usize> = j_f.iter().map(|&r| iface.start + r).collect();

    let t = single_strip_schur(a, part, strip, side)?;
    let t_fb = t.select(&j_f, jb);
    let a_fb = select_dense(a, &gf, &gb);

    // A_{rows,inner}·A_inner⁻¹·A_{inner,cols}
    let through = |rows: &[usize], cols: &[usize], inner: &[usize]| -> Result<Mat> {
        if inner.is_empty() {
            return Ok(Mat::zeros(rows.len(), cols.len()));
        }
        let lu = dense_lu(&select_dense(a, inner, inner))?;
        let w = lu.solve(&select_dense(a, inner, cols), SolveMode::Normal)?;
        Ok(select_dense(a, rows, inner).matmul(&w))
    };
    let m_f = select_dense(a, &gf, &i_gamma).sub(&through(&gf, &i_gamma, &i_alpha)?);
    let m_b = select_dense(a, &i_gamma, &gb).sub(&through(&i_gamma, &gb, &i_beta)?);
    let s = select_dense(a, &i_gamma, &i_gamma)
        .sub(&through(&i_gamma, &i_gamma, &i_alpha)?)
        .sub(&through(&i_gamma, &i_gamma, &i_beta)?);
    let s_lu = dense_lu(&s)?;
    let u = s_lu.u();
    let mut u_inv = Mat::identity(u.rows());
    solve_upper(&u, &mut u_inv);
    let x = m_f.matmul(&u_inv);
    let y = u.matmul(&s_lu.solve(&m_b, SolveMode::Normal)?);
    let approx = a_fb.sub(&x.matmul(&y));
    let scale = t_fb.norm_fro();
    let diff = approx.sub(&t_fb).norm_fro();
    Ok(SeparatorFactors {
        x,
        y,
        j_b: jb.to_vec(),
        j_f,
        i_alpha,
        i_beta,
        i_gamma,
        residual: if scale > 0.0 { diff / scale } else { diff },
    })
}

/// `‖u − v‖_∞ / ‖v‖_∞` (absolute when `v = 0`).
pub fn rel_inf_error(u: &[f64], v: &[f64]) -> f64 {
    let diff = u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = v.iter().map(|b| b.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{assemble_fd5, ProblemSpec};
    use crate::stage_one::partition;

    #[test]
    fn two_by_two_poisson_by_hand() {
        // h = 1, zero data except unit load: [4 -1 -1 0; ...] u = 1 → u = 1/2
        let spec = ProblemSpec::new(2, 2, 1.0, 0.0).with_body(|_, _| 1.0);
        let sys = assemble_fd5(&spec).unwrap();
        let u = dense_full_solve(&sys).unwrap();
        assert!(u.iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn guard_rejects_large_systems() {
        let sys = assemble_fd5(&ProblemSpec::poisson_manufactured(101, 100)).unwrap();
        assert!(matches!(dense_full_solve(&sys), Err(SlabError::OracleGuard { .. })));
    }

    #[test]
    fn whole_interface_has_empty_far_field() {
        let a = assemble_fd5(&ProblemSpec::poisson_manufactured(16, 16)).unwrap().matrix;
        let part = partition(16, 16, 4).unwrap();
        let all: Vec<usize> = (0..16).collect();
        let r = rank_property_check(&a, &part, 0, Side::Right, &all, 1e-10).unwrap();
        assert_eq!((r.rank_bf, r.rank_fb), (0, 0));
        assert!(r.pass);
        let f = separator_factors(&a, &part, 0, Side::Right, &all).unwrap();
        assert_eq!(f.x.rows(), 0);
        assert_eq!(f.residual, 0.0);
    }

    #[test]
    fn non_contiguous_sets_are_rejected() {
        let a = assemble_fd5(&ProblemSpec::poisson_manufactured(16, 16)).unwrap().matrix;
        let part = partition(16, 16, 4).unwrap();
        assert!(rank_property_check(&a, &part, 0, Side::Right, &[1, 3], 1e-10).is_err());
        assert!(rank_property_check(&a, &part, 0, Side::Right, &[], 1e-10).is_err());
        assert!(rank_property_check(&a, &part, 0, Side::Left, &[1, 2], 1e-10).is_err());
    }

    #[test]
    fn separator_has_two_rows_of_strip_nodes() {
        let a = assemble_fd5(&ProblemSpec::helmholtz_manufactured(24, 24, 10.0)).unwrap().matrix;
        let part = partition(24, 24, 4).unwrap();
        let jb: Vec<usize> = (6..14).collect();
        let f = separator_factors(&a, &part, 1, Side::Left, &jb).unwrap();
        assert_eq!(f.i_gamma.len(), 8);
        assert_eq!(f.x.cols(), 8);
        assert_eq!(f.y.rows(), 8);
        assert!(f.residual < 1e-11, "{}", f.residual);
        let total = f.i_alpha.len() + f.i_beta.len() + f.i_gamma.len();
        assert_eq!(total, part.strips[1].len());
    }

    #[test]
    fn symmetric_problem_gives_symmetric_schur() {
        let a = assemble_fd5(&ProblemSpec::poisson_manufactured(20, 12)).unwrap().matrix;
        let part = partition(20, 12, 4).unwrap();
        let t = single_strip_schur(&a, &part, 0, Side::Right).unwrap();
        assert!(t.sub(&t.transpose()).max_abs() <= 1e-12 * t.max_abs());
    }
}
