//! Checks `bessel_j0` against slow, independent references: the power series in
//! exact rational arithmetic for moderate arguments, and Miller's backward
//! recurrence for large ones.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use proptest::prelude::*;
use slablu::problem::bessel_j0;

/// Σ (−t²/4)^k / (k!)² in exact arithmetic, truncated once terms fall below 10⁻⁴⁰.
fn j0_exact_series(t: f64) -> f64 {
    let x = BigRational::from_float(t).unwrap();
    let q = -(&x * &x) / BigRational::from_integer(BigInt::from(4));
    let eps = BigRational::new(BigInt::one(), BigInt::from(10).pow(40));
    let mut term = BigRational::one();
    let mut sum = BigRational::one();
    let mut k = 1u64;
    loop {
        term = term * &q / BigRational::from_integer(BigInt::from(k * k));
        sum += &term;
        if term.abs() < eps && BigInt::from(k) * BigInt::from(k) > BigInt::from(4) * x.to_integer().abs().pow(2) {
            break;
        }
        k += 1;
    }
    sum.to_f64().unwrap()
}

/// Miller's algorithm: backward recurrence normalised by J₀ + 2ΣJ₂ₖ = 1.
fn j0_miller(x: f64) -> f64 {
    let start = (x + 30.0 * x.powf(1.0 / 3.0) + 60.0) as usize;
    let start = start + start % 2;
    let (mut jp1, mut j) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut j0 = 0.0;
    for n in (1..=start).rev() {
        let jm1 = 2.0 * n as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if (n - 1) % 2 == 0 && n > 1 {
            norm += 2.0 * j;
        }
        if n == 1 {
            j0 = j;
        }
        if j.abs() > 1e250 {
            jp1 *= 1e-250;
            j *= 1e-250;
            norm *= 1e-250;
        }
    }
    j0 / (norm + j0)
}

#[test]
fn exact_series_reference_points() {
    assert!((j0_exact_series(1.0) - 0.7651976865579666).abs() < 1e-16);
    assert!((j0_exact_series(5.0) - -0.177_596_771_314_338_3).abs() < 1e-16);
}

#[test]
fn matches_exact_series_on_grid_including_switch_point() {
    let mut worst: f64 = 0.0;
    let mut t = 0.0;
    while t <= 30.0 {
        worst = worst.max((bessel_j0(t) - j0_exact_series(t)).abs());
        t += 0.37;
    }
    for t in [19.999, 20.0, 20.0001, 12.0] {
        worst = worst.max((bessel_j0(t) - j0_exact_series(t)).abs());
    }
    assert!(worst <= 1e-15, "max abs error {worst:e}");
}

#[test]
fn matches_miller_recurrence_for_large_arguments() {
    let mut worst: f64 = 0.0;
    for t in [35.0, 77.7, 100.0, 523.1, 1000.0, 2718.28, 9999.5, 10000.0] {
        let d = (bessel_j0(t) - j0_miller(t)).abs();
        worst = worst.max(d);
    }
    assert!(worst <= 1e-13, "max abs error {worst:e}");
}

#[test]
fn first_zero() {
    assert!(bessel_j0(2.404825557695773).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn even_and_bounded(t in -1e4f64..1e4) {
        let v = bessel_j0(t);
        prop_assert_eq!(v, bessel_j0(-t));
        prop_assert!(v.abs() <= 1.0);
    }

    #[test]
    fn agrees_with_exact_series(t in 0f64..30.0) {
        prop_assert!((bessel_j0(t) - j0_exact_series(t)).abs() <= 1e-15);
    }
}

#[test]
fn zero_argument() {
    assert_eq!(bessel_j0(0.0), 1.0);
    assert_eq!(j0_exact_series(0.0), 1.0);
}
