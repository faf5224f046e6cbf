//! Singular values by one-sided Jacobi rotations, and numerical rank.

use super::dense::{dot, norm2, Mat};
use super::qr::Qr;

/// Singular values in descending order.
///
/// The matrix is first reduced to its square triangular factor by QR (which
/// preserves singular values), then orthogonalised column-pairwise.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    let work = if m >= n { a.clone() } else { a.transpose() };
    let mut w = Qr::new(work).r();
    let n = w.cols();
    let scale = w.max_abs();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    w.scale(1.0 / scale);
    let rows = w.rows();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = w.col(p);
                    let cq = w.col(q);
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let d = w.as_mut_slice();
                for i in 0..rows {
                    let x = d[p * rows + i];
                    let y = d[q * rows + i];
                    d[p * rows + i] = c * x - s * y;
                    d[q * rows + i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| norm2(w.col(j)) * scale).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Number of singular values strictly greater than `rel_tol · σ_max`
/// (zero for the zero matrix).
pub fn numerical_rank(a: &Mat, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_singular_values() {
        let a = Mat::from_diag(&[3.0, -7.0, 0.5]);
        let sv = singular_values(&a);
        let expect = [7.0, 3.0, 0.5];
        for (s, e) in sv.iter().zip(expect) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn known_two_by_two() {
        // [[1, 1], [0, 1]] has singular values (1 ± √5)/2 in magnitude: φ and 1/φ
        let a = Mat::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let sv = singular_values(&a);
        assert!((sv[0] - phi).abs() < 1e-15);
        assert!((sv[1] - 1.0 / phi).abs() < 1e-15);
    }

    #[test]
    fn frobenius_norm_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(23, 9, &mut rng);
        let sv = singular_values(&a);
        let f: f64 = sv.iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((f - a.norm_fro()).abs() < 1e-13 * f);
    }

    #[test]
    fn rank_of_zero_and_outer_product() {
        assert_eq!(numerical_rank(&Mat::zeros(5, 3), 1e-10), 0);
        let u = Mat::column(&[1.0, 2.0, 3.0, 4.0]);
        let v = Mat::column(&[1.0, -1.0, 0.5]);
        assert_eq!(numerical_rank(&u.matmul_t(&v), 1e-10), 1);
    }

    #[test]
    fn rank_of_sum_of_rank_one_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in [1, 3, 7, 10] {
            let a = random(30, k, &mut rng).matmul(&random(k, 20, &mut rng));
            assert_eq!(numerical_rank(&a, 1e-10), k);
            assert_eq!(numerical_rank(&a.transpose(), 1e-10), k);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rank_is_monotone_in_tolerance(seed in 0u64..500, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = random(12, k, &mut rng).matmul(&random(k, 10, &mut rng));
            a.axpy(1e-7, &random(12, 10, &mut rng));
            let tols = [1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-3, 0.5];
            let ranks: Vec<usize> = tols.iter().map(|&t| numerical_rank(&a, t)).collect();
            for w in ranks.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
