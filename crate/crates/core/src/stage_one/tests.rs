use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::dense_lu;
use crate::problem::{assemble_fd5, ProblemSpec};

fn poisson(n1: usize, n2: usize) -> CsrMatrix {
    assemble_fd5(&ProblemSpec::poisson_manufactured(n1, n2)).unwrap().matrix
}

/// Five-point matrix with an upwind-like skew so that `A ≠ Aᵀ`.
fn skewed(n1: usize, n2: usize) -> CsrMatrix {
    let a = assemble_fd5(&ProblemSpec::helmholtz_varcoef(n1, n2, 7.0)).unwrap().matrix;
    let mut t = Vec::new();
    for i in 0..a.nrows() {
        let (idx, vals) = a.row(i);
        for (&j, &v) in idx.iter().zip(vals) {
            let f = if j > i { 1.0 + 0.3 * ((i + 2 * j) % 5) as f64 / 5.0 } else { 1.0 };
            t.push((i, j, v * f));
        }
    }
    CsrMatrix::from_triplets(a.nrows(), a.ncols(), t).unwrap()
}

/// Dense `T = A_JJ − A_JI·A_II⁻¹·A_IJ` with interfaces ordered left to right.
fn dense_reduced(a: &CsrMatrix, part: &SlabPartition) -> Mat {
    let d = a.to_dense();
    let jset: Vec<usize> = (0..part.num_interfaces()).flat_map(|j| part.interface_range(j)).collect();
    let iset: Vec<usize> = (0..a.nrows()).filter(|g| !jset.contains(g)).collect();
    let aii = dense_lu(&d.select(&iset, &iset)).unwrap();
    let x = aii.solve(&d.select(&iset, &jset), SolveMode::Normal).unwrap();
    d.select(&jset, &jset).sub(&d.select(&jset, &iset).matmul(&x))
}

fn random(m: usize, n: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).norm_fro() / b.norm_fro()
}

#[test]
fn apply_t_block_matches_dense_schur() {
    for (a, n1, n2, b) in [(poisson(16, 12), 16, 12, 3), (skewed(15, 9), 15, 9, 4)] {
        let part = partition(n1, n2, b).unwrap();
        let t = dense_reduced(&a, &part);
        let s1 = StageOne::new(&a, part).unwrap();
        let m = s1.num_interfaces();
        let x = random(n2, 3, 1);
        for j in 0..m {
            for k in j.saturating_sub(1)..(j + 2).min(m) {
                let exact = t.block(j * n2..(j + 1) * n2, k * n2..(k + 1) * n2);
                let got = s1.apply_t_block(j, k, &x, SolveMode::Normal).unwrap();
                assert!(rel(&got, &exact.matmul(&x)) < 1e-12, "({j},{k})");
                let got = s1.apply_t_block(j, k, &x, SolveMode::Adjoint).unwrap();
                assert!(rel(&got, &exact.t_matmul(&x)) < 1e-12, "({j},{k})ᵀ");
            }
        }
    }
}

#[test]
fn adjoint_is_consistent() {
    let a = skewed(19, 11);
    let s1 = StageOne::new(&a, partition(19, 11, 4).unwrap()).unwrap();
    assert!(!s1.is_symmetric());
    let (x, y) = (random(11, 1, 2), random(11, 1, 3));
    for (j, k) in [(0, 0), (0, 1), (1, 0), (1, 2), (2, 2)] {
        let tx = s1.apply_t_block(j, k, &x, SolveMode::Normal).unwrap();
        let ty = s1.apply_t_block(j, k, &y, SolveMode::Adjoint).unwrap();
        let (l, r) = (crate::linalg::dot(tx.col(0), y.col(0)), crate::linalg::dot(x.col(0), ty.col(0)));
        assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()), "({j},{k}): {l} vs {r}");
    }
}

#[test]
fn non_adjacent_blocks_are_rejected() {
    let a = poisson(15, 5);
    let s1 = StageOne::new(&a, partition(15, 5, 2).unwrap()).unwrap();
    let x = random(5, 1, 4);
    assert!(matches!(
        s1.apply_t_block(0, 2, &x, SolveMode::Normal),
        Err(SlabError::NonAdjacentBlock { j: 0, k: 2 })
    ));
    assert!(s1.apply_t_block(0, 99, &x, SolveMode::Normal).is_err());
    assert!(s1.apply_t_block(0, 0, &random(4, 1, 0), SolveMode::Normal).is_err());
}

#[test]
fn dense_blocks_equal_identity_applies_bitwise() {
    let a = skewed(17, 8);
    let s1 = StageOne::new(&a, partition(17, 8, 3).unwrap()).unwrap();
    let red = s1.build_reduced(&Compression::Dense).unwrap();
    let eye = Mat::identity(8);
    let m = s1.num_interfaces();
    for j in 0..m {
        assert_eq!(red.blocks.diag[j], s1.apply_t_block(j, j, &eye, SolveMode::Normal).unwrap());
        if j + 1 < m {
            assert_eq!(red.blocks.sup[j], s1.apply_t_block(j, j + 1, &eye, SolveMode::Normal).unwrap());
            assert_eq!(red.blocks.sub[j], s1.apply_t_block(j + 1, j, &eye, SolveMode::Normal).unwrap());
        }
    }
    assert_eq!(red.hbs_max_rank(), 0);
    let t = dense_reduced(&a, s1.partition());
    assert!(rel(&red.blocks.to_dense(), &t) < 1e-12);
}

#[test]
fn hbs_blocks_agree_with_dense() {
    let a = poisson(64, 64);
    let s1 = StageOne::new(&a, partition(64, 64, 4).unwrap()).unwrap();
    let dense = s1.build_reduced(&Compression::Dense).unwrap();
    let settings = HbsSettings::new(HbsConfig {
        leaf_size: 16,
        ..HbsConfig::default()
    });
    let hbs = s1.build_reduced(&Compression::Hbs(settings)).unwrap();
    for (x, y) in hbs.blocks.diag.iter().zip(&dense.blocks.diag) {
        assert!(rel(x, y) < 1e-9);
    }
    for (x, y) in hbs.blocks.sup.iter().zip(&dense.blocks.sup) {
        assert!(rel(x, y) < 1e-9);
    }
    assert_eq!(hbs.compression.len(), s1.slabs().len());
    assert!(hbs.hbs_max_rank() <= 8);
    for c in &hbs.compression {
        assert_eq!(c.stats().adjoint_products, 0);
        assert!(c.stats().normal_products <= 4 * c.stats().working_rank + 16);
    }
}

#[test]
fn reduce_and_recover_match_dense_elimination() {
    let (n1, n2) = (14, 9);
    let a = skewed(n1, n2);
    let part = partition(n1, n2, 3).unwrap();
    let s1 = StageOne::new(&a, part.clone()).unwrap();
    let f = random(n1 * n2, 2, 5);
    let d = a.to_dense();
    let jset: Vec<usize> = (0..part.num_interfaces()).flat_map(|j| part.interface_range(j)).collect();
    let iset: Vec<usize> = (0..n1 * n2).filter(|g| !jset.contains(g)).collect();
    let aii = dense_lu(&d.select(&iset, &iset)).unwrap();
    let fi = f.select_rows(&iset);
    let exact = f.select_rows(&jset).sub(&d.select(&jset, &iset).matmul(&aii.solve(&fi, SolveMode::Normal).unwrap()));
    let red = s1.reduce_rhs(&f).unwrap();
    assert!(rel(&red, &exact) < 1e-12);

    let uj = random(jset.len(), 2, 6);
    let ui = aii
        .solve(&fi.sub(&d.select(&iset, &jset).matmul(&uj)), SolveMode::Normal)
        .unwrap();
    let u = s1.recover_interiors(&uj, &f).unwrap();
    assert!(rel(&u.select_rows(&iset), &ui) < 1e-11);
    assert_eq!(u.select_rows(&jset), uj);
}

#[test]
fn strips_factor_independently_and_bitwise() {
    let a = skewed(23, 10);
    let part = partition(23, 10, 4).unwrap();
    let all = factor_interiors(&a, &part).unwrap();
    let x = random(10, 2, 7);
    for s in (0..part.num_strips()).rev() {
        let alone = SlabFactor::assemble(&a, &part, s).unwrap();
        for h in alone.sides() {
            let p = alone.schur_sample(h, &x, SolveMode::Normal, &alone.sides()).unwrap();
            let q = all[s].schur_sample(h, &x, SolveMode::Normal, &all[s].sides()).unwrap();
            assert_eq!(p, q);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let s_many = pool.install(|| StageOne::new(&a, part.clone()).unwrap().build_reduced(&Compression::Dense).unwrap());
    let s_one = StageOne::new(&a, part).unwrap().build_reduced(&Compression::Dense).unwrap();
    assert_eq!(s_many.blocks, s_one.blocks);
}

#[test]
fn single_strip_has_empty_reduced_system() {
    let a = poisson(6, 4);
    let s1 = StageOne::new(&a, partition(6, 4, 6).unwrap()).unwrap();
    assert_eq!(s1.reduced_dim(), 0);
    let red = s1.build_reduced(&Compression::Dense).unwrap();
    assert_eq!(red.blocks.num_blocks(), 0);
    let f = random(24, 1, 8);
    let u = s1.recover_interiors(&Mat::zeros(0, 1), &f).unwrap();
    let d = a.to_dense();
    assert!(rel(&d.matmul(&u), &f) < 1e-13);
}

#[test]
fn sign_fault_changes_reduced_blocks() {
    let a = poisson(11, 6);
    let good = StageOne::new(&a, partition(11, 6, 3).unwrap()).unwrap();
    let bad = good.clone().with_sign_fault(true);
    let x = random(6, 1, 9);
    let d = good.apply_t_block(0, 0, &x, SolveMode::Normal).unwrap();
    let f = bad.apply_t_block(0, 0, &x, SolveMode::Normal).unwrap();
    assert!(rel(&f, &d) > 1e-3);
}

#[test]
fn storage_counts_add_up() {
    let a = poisson(20, 7);
    let s1 = StageOne::new(&a, partition(20, 7, 4).unwrap()).unwrap();
    let factors: usize = s1.slabs().iter().map(SlabFactor::factor_scalars).sum();
    // band U (3w+1 wide incl. multipliers) per strip row
    let expect: usize = s1.slabs().iter().map(|s| s.strip.len() * (3 * s.strip.width + 1)).sum();
    assert_eq!(factors, expect);
    assert!(s1.stored_scalars() > factors);
}

#[test]
fn non_five_point_coupling_is_rejected() {
    let a = poisson(9, 3);
    let mut t = Vec::new();
    for i in 0..a.nrows() {
        let (idx, vals) = a.row(i);
        t.extend(idx.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
    }
    // couple column 0 with column 6 directly
    t.push((0, 18, 1.0));
    let bad = CsrMatrix::from_triplets(27, 27, t).unwrap();
    assert!(StageOne::new(&bad, partition(9, 3, 2).unwrap()).is_err());
}
