use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use cutofflab::metrics::{profile_tv, profile_wp, tv_gaussian, wp_empirical, GaussianLaw};
use cutofflab::simulate::ScaleFunction;
use cutofflab::spectral::{
    asymptotic_prefactor, cutoff_time_scale, dominant_decomposition, omega_limit_set, validate_stability, StableMatrix,
};

/// Random matrix shifted so that its spectral margin is at least `margin`.
fn stable_from(entries: &[f64], n: usize, margin: f64) -> StableMatrix {
    let b = DMatrix::from_row_slice(n, n, entries);
    let lowest = b.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let shifted = &b + DMatrix::identity(n, n) * (margin - lowest);
    validate_stability(&shifted).unwrap()
}

fn matrix_and_vector(max_dim: usize) -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(-3.0..3.0f64, n * n), prop::collection::vec(-2.0..2.0f64, n))
    })
}

fn spd(entries: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(2, 2, entries);
    &m * m.transpose() + DMatrix::identity(2, 2) * 0.2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nonzero_frequencies_come_in_pairs((n, a, x) in matrix_and_vector(5), margin in 0.1..2.0f64) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let a = stable_from(&a, n, margin);
        let dec = dominant_decomposition(&a, &x).unwrap();
        let mut pos: Vec<f64> = dec.angular_velocities.iter().copied().filter(|t| *t > 0.0).collect();
        let mut neg: Vec<f64> = dec.angular_velocities.iter().copied().filter(|t| *t < 0.0).map(|t| -t).collect();
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        prop_assert_eq!(pos, neg);
    }

    #[test]
    fn omega_limit_avoids_origin((n, a, x) in matrix_and_vector(4), margin in 0.1..2.0f64) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let a = stable_from(&a, n, margin);
        let dec = dominant_decomposition(&a, &x).unwrap();
        let omega = omega_limit_set(&dec, 32).unwrap();
        let smallest = omega.samples.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(f64::INFINITY, f64::min);
        prop_assert!(smallest > 1e-9 && smallest.is_finite(), "min ‖v‖ = {}", smallest);
    }

    #[test]
    fn scalar_case_degenerates(lambda in 0.01..50.0f64, x in prop_oneof![-10.0..-1e-3f64, 1e-3..10.0f64]) {
        let a = validate_stability(&DMatrix::from_element(1, 1, lambda)).unwrap();
        let dec = dominant_decomposition(&a, &[x]).unwrap();
        prop_assert_eq!(dec.block_size, 1);
        prop_assert_eq!(dec.mode_count, 1);
        prop_assert_eq!(dec.angular_velocities.clone(), vec![0.0]);
        prop_assert!((dec.mode_vectors[0][0].re - x).abs() <= 1e-12 * x.abs());
        prop_assert!((dec.rate - lambda).abs() <= 1e-12 * lambda);
    }

    #[test]
    fn tv_is_zero_homogeneous(m in prop::collection::vec(-3.0..3.0f64, 4), c in prop::collection::vec(-1.0..1.0f64, 4)) {
        let cov = spd(&c);
        let g1 = GaussianLaw::new(DVector::from_column_slice(&m[..2]), cov.clone()).unwrap();
        let g2 = GaussianLaw::new(DVector::from_column_slice(&m[2..]), cov).unwrap();
        let base = tv_gaussian(&g1, &g2).unwrap();
        for k in [-2.0, 0.5, 10.0] {
            let z = DVector::zeros(2);
            let scaled = tv_gaussian(&g1.affine(&z, k), &g2.affine(&z, k)).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-10);
        }
    }

    #[test]
    fn univariate_tv_is_zero_homogeneous(m1 in -3.0..3.0f64, m2 in -3.0..3.0f64, v1 in 0.1..4.0f64, v2 in 0.1..4.0f64) {
        let g1 = GaussianLaw::scalar(m1, v1);
        let g2 = GaussianLaw::scalar(m2, v2);
        let base = tv_gaussian(&g1, &g2).unwrap();
        for k in [-2.0, 0.5, 10.0] {
            let z = DVector::zeros(1);
            let scaled = tv_gaussian(&g1.affine(&z, k), &g2.affine(&z, k)).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-10);
        }
    }

    #[test]
    fn tv_depends_on_shift_difference(v1 in prop::collection::vec(-3.0..3.0f64, 2), v2 in prop::collection::vec(-3.0..3.0f64, 2),
                                      s in prop::collection::vec(-5.0..5.0f64, 2), c in prop::collection::vec(-1.0..1.0f64, 4)) {
        let x = GaussianLaw::new(DVector::zeros(2), spd(&c)).unwrap();
        let (v1, v2, s) = (DVector::from_vec(v1), DVector::from_vec(v2), DVector::from_vec(s));
        let a = tv_gaussian(&x.affine(&v1, 1.0), &x.affine(&v2, 1.0)).unwrap();
        let b = tv_gaussian(&x.affine(&(&v1 + &s), 1.0), &x.affine(&(&v2 + &s), 1.0)).unwrap();
        let c0 = tv_gaussian(&x.affine(&(&v1 - &v2), 1.0), &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 && (a - c0).abs() <= 1e-10);
    }

    #[test]
    fn tv_is_continuous_in_the_shift(v in prop::collection::vec(-3.0..3.0f64, 2), dv in prop::collection::vec(-0.1..0.1f64, 2),
                                     c in prop::collection::vec(-1.0..1.0f64, 4)) {
        let cov = spd(&c);
        let x = GaussianLaw::new(DVector::zeros(2), cov.clone()).unwrap();
        let (v, dv) = (DVector::from_vec(v), DVector::from_vec(dv));
        let a = tv_gaussian(&x.affine(&v, 1.0), &x).unwrap();
        let b = tv_gaussian(&x.affine(&(&v + &dv), 1.0), &x).unwrap();
        // d/dd erf(d/(2√2)) ≤ 1/√(2π) and the Mahalanobis norm is 1-Lipschitz in C^{-1/2}v
        let l = cov.cholesky().unwrap();
        let delta = l.l().solve_lower_triangular(&dv).unwrap().norm();
        prop_assert!((a - b).abs() <= delta / (2.0 * std::f64::consts::PI).sqrt() + 1e-14);
    }

    #[test]
    fn wasserstein_is_one_homogeneous(xs in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 12),
                                      ys in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 12),
                                      c in prop_oneof![-4.0..-0.1f64, 0.1..4.0f64], p in 1.0..3.0f64) {
        let base = wp_empirical(&xs, &ys, p).unwrap();
        let scale = |s: &[Vec<f64>]| s.iter().map(|v| v.iter().map(|a| a * c).collect()).collect::<Vec<Vec<f64>>>();
        let scaled = wp_empirical(&scale(&xs), &scale(&ys), p).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * (1.0 + scaled));
    }

    #[test]
    fn profiles_decrease(lambda in 0.1..3.0f64, ell in 1usize..4, w in 0.2..3.0f64,
                         v in prop::collection::vec(-2.0..2.0f64, 2), c in prop::collection::vec(-1.0..1.0f64, 4),
                         r in -5.0..5.0f64, dr in 0.01..2.0f64) {
        prop_assume!(v.iter().map(|a| a * a).sum::<f64>() > 1e-3);
        let z = GaussianLaw::new(DVector::zeros(2), spd(&c)).unwrap();
        let a = profile_tv(lambda, ell, w, &v, &z, r).unwrap();
        let b = profile_tv(lambda, ell, w, &v, &z, r + dr).unwrap();
        prop_assert!(b <= a);
        prop_assert!(profile_wp(lambda, ell, w, &v, r + dr) < profile_wp(lambda, ell, w, &v, r));
    }
}

#[test]
fn profile_endpoints() {
    let z = GaussianLaw::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let v = [0.3, -0.4];
    assert!(profile_tv(1.0, 1, 1.0, &v, &z, -40.0).unwrap() > 1.0 - 1e-12);
    assert!(profile_tv(1.0, 1, 1.0, &v, &z, 40.0).unwrap() < 1e-12);
    assert!(profile_wp(1.0, 1, 1.0, &v, -40.0) > 1e15);
    assert!(profile_wp(1.0, 1, 1.0, &v, 40.0) < 1e-15);
}

#[test]
fn prefactor_gaps_shrink_over_the_catalog() {
    let catalog: [&[&[f64]]; 5] = [
        &[&[1.0, 0.0], &[0.0, 2.0]],
        &[&[1.0, -1.0], &[0.0, 1.0]],
        &[&[1.0, -2.0], &[2.0, 1.0]],
        &[&[1.0, 1.0, 0.0], &[0.0, 2.0, -3.0], &[0.0, 3.0, 2.0]],
        &[&[1.0, -3.0, 0.5, 0.0], &[3.0, 1.0, 0.0, 0.5], &[0.0, 0.0, 2.0, 1.0], &[0.0, 0.0, 0.0, 2.0]],
    ];
    let xs: [&[f64]; 5] = [&[1.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0, 1.0], &[1.0, 0.0, 1.0, 1.0]];
    for (rows, x) in catalog.iter().zip(xs) {
        let n = rows.len();
        let a = validate_stability(&DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap();
        let dec = dominant_decomposition(&a, x).unwrap();
        let sigma = ScaleFunction::One;
        let mut prev = f64::INFINITY;
        for k in 2..=6 {
            let s = cutoff_time_scale(dec.rate, dec.block_size, &sigma, 10f64.powi(-k), 1.0).unwrap();
            let (f, l) = asymptotic_prefactor(&s, 0.0, dec.rate, dec.block_size, &sigma).unwrap();
            let gap = (f - l).abs();
            if dec.block_size == 1 {
                // the schedule is exact when ℓ = 1; only rounding is left
                assert!(gap <= 1e-12 * l, "gap {gap} for {rows:?}");
            } else {
                assert!(gap < prev, "gap grew at k={k} for {rows:?}");
            }
            prev = gap;
        }
    }
}
