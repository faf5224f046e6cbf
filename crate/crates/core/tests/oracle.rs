use proptest::prelude::*;

use slablu::driver::{ProblemSetup, Wavenumber};
use slablu::linalg::{numerical_rank, Mat, SolveMode};
use slablu::oracle::{
    dense_full_solve, dense_reduced_matrix, dense_schur_block, interface_indices, rank_property_check, select_dense,
    separator_factors, single_strip_schur,
};
use slablu::problem::{assemble_fd5, CsrMatrix, SparseSystem};
use slablu::stage_one::{partition, Side, StageOne};

fn system(setup: &ProblemSetup) -> SparseSystem {
    assemble_fd5(&setup.spec()).unwrap()
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).norm_fro() / b.norm_fro().max(f64::MIN_POSITIVE)
}

/// The dense oracle solves both `A·u = f` and `Aᵀ·v = f` for a
/// nonsymmetric matrix.
#[test]
fn dense_solve_respects_transposition() {
    let sys = system(&ProblemSetup::helmholtz_varcoef(9, 7, Wavenumber::Kappa(5.0)));
    let a = sys.matrix.to_dense();
    let at = SparseSystem {
        matrix: sys.matrix.transpose(),
        ..sys.clone()
    };
    let u = dense_full_solve(&sys).unwrap();
    let v = dense_full_solve(&at).unwrap();
    let au = a.matvec(&u);
    let atv = a.transpose().matvec(&v);
    for (x, y) in au.iter().zip(&sys.rhs).chain(atv.iter().zip(&sys.rhs)) {
        assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
    }
}

/// The identity-applied blocks equal a from-scratch Schur elimination.
#[test]
fn materialised_blocks_match_independent_elimination() {
    for setup in [
        ProblemSetup::poisson(24, 24),
        ProblemSetup::helmholtz(32, 32, Wavenumber::Ppw(15.0)),
    ] {
        let sys = system(&setup);
        let part = partition(sys.n1, sys.n2, 4).unwrap();
        let t = dense_reduced_matrix(&sys.matrix, &part).unwrap();
        let stage = StageOne::new(&sys.matrix, part).unwrap();
        let n2 = sys.n2;
        for j in 0..stage.num_interfaces() {
            for k in j.saturating_sub(1)..(j + 2).min(stage.num_interfaces()) {
                let got = dense_schur_block(&stage, j, k).unwrap();
                let exact = t.block(j * n2..(j + 1) * n2, k * n2..(k + 1) * n2);
                assert!(rel(&got, &exact) <= 1e-12, "({j},{k})");
            }
        }
    }
}

#[test]
fn single_strip_schur_is_symmetric_for_symmetric_problems() {
    let sys = system(&ProblemSetup::poisson(30, 30));
    let part = partition(30, 30, 5).unwrap();
    for (strip, side) in [(0, Side::Right), (1, Side::Left), (1, Side::Right)] {
        let t = single_strip_schur(&sys.matrix, &part, strip, side).unwrap();
        assert!(rel(&t, &t.transpose()) <= 1e-12);
    }
}

#[test]
fn reduced_matrix_is_ordered_by_interface() {
    let sys = system(&ProblemSetup::poisson(11, 3));
    let part = partition(11, 3, 2).unwrap();
    assert_eq!(interface_indices(&part), vec![6, 7, 8, 15, 16, 17, 24, 25, 26]);
    let t = dense_reduced_matrix(&sys.matrix, &part).unwrap();
    assert_eq!(t.shape(), (9, 9));
}

/// What the rank bound misses: removing the sparse stencil couplings
/// leaves a block of rank at most twice the strip width.
#[test]
fn eliminated_part_has_rank_at_most_twice_the_width() {
    let sys = system(&ProblemSetup::poisson(64, 64));
    for b in [2, 4, 8] {
        let part = partition(64, 64, b).unwrap();
        let jb: Vec<usize> = (16..48).collect();
        let r = rank_property_check(&sys.matrix, &part, 0, Side::Right, &jb, 1e-10).unwrap();
        assert!(r.schur_rank_fb <= 2 * b && r.schur_rank_bf <= 2 * b, "{r:?}");
        // each of the two cuts contributes a single stencil coupling
        assert!(r.rank_fb <= 2 * b + 2);
    }
}

#[test]
fn separator_factors_have_exact_width_and_reproduce_the_block() {
    let sys = system(&ProblemSetup::helmholtz(40, 40, Wavenumber::Ppw(10.0)));
    let part = partition(40, 40, 6).unwrap();
    let jb: Vec<usize> = (10..22).collect();
    let f = separator_factors(&sys.matrix, &part, 1, Side::Right, &jb).unwrap();
    assert_eq!(f.i_gamma.len(), 12);
    assert_eq!(f.x.shape(), (28, 12));
    assert_eq!(f.y.shape(), (12, 12));
    assert!(f.residual <= 1e-11);
    assert!(numerical_rank(&f.x.matmul(&f.y), 1e-14) <= 12);
}

fn tiny_matrix(n1: usize, n2: usize, kappa: f64) -> CsrMatrix {
    system(&ProblemSetup::helmholtz_varcoef(n1, n2, Wavenumber::Kappa(kappa))).matrix
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Reduced matrix from the oracle equals the stage-one applies.
    #[test]
    fn oracle_and_matrix_free_agree(n1 in 6usize..16, n2 in 3usize..10, b in 1usize..5, kappa in 0.0f64..8.0) {
        prop_assume!(b + 1 < n1 && n2 <= n1);
        let a = tiny_matrix(n1, n2, kappa);
        let part = partition(n1, n2, b).unwrap();
        let t = dense_reduced_matrix(&a, &part).unwrap();
        let stage = StageOne::new(&a, part).unwrap();
        let m = stage.num_interfaces();
        for j in 0..m {
            let x = Mat::identity(n2);
            let got = stage.apply_t_block(j, j, &x, SolveMode::Normal).unwrap();
            let exact = t.block(j * n2..(j + 1) * n2, j * n2..(j + 1) * n2);
            prop_assert!(rel(&got, &exact) <= 1e-11);
        }
    }

    /// Dense selection agrees with point lookups.
    #[test]
    fn select_dense_matches_get(n1 in 2usize..8, n2 in 2usize..8, seed in 0u64..100) {
        prop_assume!(n2 <= n1);
        let a = tiny_matrix(n1, n2, 1.0);
        let n = n1 * n2;
        let rows: Vec<usize> = (0..n).filter(|i| (i + seed as usize).is_multiple_of(3)).collect();
        let cols: Vec<usize> = (0..n).filter(|i| (i + seed as usize).is_multiple_of(2)).collect();
        let d = select_dense(&a, &rows, &cols);
        for (p, &i) in rows.iter().enumerate() {
            for (q, &j) in cols.iter().enumerate() {
                prop_assert_eq!(d.as_slice()[p + q * rows.len()], a.get(i, j));
            }
        }
    }
}
