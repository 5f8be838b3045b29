//! FAD and MMD against independent closed forms and brute-force sums.

use nalgebra::{DMatrix, DVector};
use prompt_adherence::embedding::EmbeddingMatrix;
use prompt_adherence::metrics::{distance, frechet_distance, gaussian_stats, mmd2, sqrtm_psd, GaussianStats, KernelParams, Metric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> EmbeddingMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    EmbeddingMatrix::new(rows, cols, data, "test").unwrap()
}

fn diag_stats(mean: &[f64], var: &[f64]) -> GaussianStats {
    GaussianStats {
        mean: DVector::from_column_slice(mean),
        cov: DMatrix::from_diagonal(&DVector::from_column_slice(var)),
        n: 100,
    }
}

#[test]
fn two_rows_mean_and_covariance() {
    let x = EmbeddingMatrix::from_rows(&[[0.0f32], [2.0]], "t").unwrap();
    let g = gaussian_stats(&x).unwrap();
    assert_eq!(g.mean[0], 1.0);
    assert_eq!(g.cov[(0, 0)], 2.0);
}

#[test]
fn covariance_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_matrix(&mut rng, 10, 3);
    let g = gaussian_stats(&x).unwrap();
    let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    for a in 0..3 {
        assert!((g.mean[a] - mean[a]).abs() < 1e-10);
        for b in 0..3 {
            let c = rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0);
            assert!((g.cov[(a, b)] - c).abs() < 1e-10, "cov[{a},{b}]");
        }
    }
}

#[test]
fn constant_rows_have_zero_covariance() {
    let x = EmbeddingMatrix::from_rows(&[[1.5f32, -2.0]; 6], "t").unwrap();
    let g = gaussian_stats(&x).unwrap();
    assert!(g.cov.iter().all(|&v| v == 0.0));
    assert!(gaussian_stats(&EmbeddingMatrix::from_rows(&[[1.0f32]], "t").unwrap()).is_err());
}

#[test]
fn frechet_closed_forms() {
    let a = diag_stats(&[0.0], &[1.0]);
    assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-9);
    let b = diag_stats(&[1.0], &[1.0]);
    assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-9);

    let c = diag_stats(&[0.0, 0.0], &[1.0, 4.0]);
    let d = diag_stats(&[0.0, 0.0], &[4.0, 1.0]);
    assert!((frechet_distance(&c, &d).unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn frechet_diagonal_cases_match_commuting_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let d = rng.random_range(1..8);
        let m1: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m2: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v1: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..5.0)).collect();
        let v2: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..5.0)).collect();
        let oracle: f64 = (0..d)
            .map(|i| (m1[i] - m2[i]).powi(2) + (v1[i].sqrt() - v2[i].sqrt()).powi(2))
            .sum();
        let got = frechet_distance(&diag_stats(&m1, &v1), &diag_stats(&m2, &v2)).unwrap();
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
        let back = frechet_distance(&diag_stats(&m2, &v2), &diag_stats(&m1, &v1)).unwrap();
        assert!((got - back).abs() < 1e-9);
    }
}

#[test]
fn mean_shift_adds_c_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_matrix(&mut rng, 40, 4);
    let c = 0.75f32;
    let shifted: Vec<f32> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if i % 4 == 2 { v + c } else { v })
        .collect();
    let y = EmbeddingMatrix::new(40, 4, shifted, "t").unwrap();
    let d = distance(Metric::Fad, &x, &y).unwrap();
    // Shifting one coordinate leaves the covariance untouched up to f32 rounding.
    assert!((d - (c as f64).powi(2)).abs() < 1e-5, "{d}");
}

#[test]
fn sqrt_residual_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_matrix(&mut rng, 30, 6).to_dmatrix();
    let m = a.transpose() * &a;
    let s = sqrtm_psd(&m).unwrap();
    let r = (&s * &s - &m).norm() / m.norm();
    assert!(r < 1e-6, "{r}");
}

/// Biased MMD by explicit double loops over all pairs.
fn naive_mmd(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> f64 {
    let d = x.cols() as f64;
    let k = |a: &[f32], b: &[f32]| {
        let dot: f64 = a.iter().zip(b).map(|(&p, &q)| p as f64 * q as f64).sum();
        (dot / d + 1.0).powi(3)
    };
    let mean = |p: &EmbeddingMatrix, q: &EmbeddingMatrix| {
        let mut s = 0.0;
        for a in p.iter_rows() {
            for b in q.iter_rows() {
                s += k(a, b);
            }
        }
        s / (p.rows() * q.rows()) as f64
    };
    (mean(x, x) + mean(y, y) - 2.0 * mean(x, y)).max(0.0)
}

#[test]
fn mmd_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let d = rng.random_range(1..=64);
        let (n, m) = (rng.random_range(1..=200), rng.random_range(1..=200));
        let x = random_matrix(&mut rng, n, d);
        let y = random_matrix(&mut rng, m, d);
        let got = mmd2(&x, &y, &KernelParams::for_dim(d)).unwrap();
        let want = naive_mmd(&x, &y);
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-12) + 1e-12, "{got} vs {want}");
    }
}

#[test]
fn mmd_trivial_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_matrix(&mut rng, 20, 4);
    assert_eq!(mmd2(&x, &x, &KernelParams::for_dim(4)).unwrap(), 0.0);
    let z = EmbeddingMatrix::from_rows(&[[0.0f32]], "t").unwrap();
    assert_eq!(mmd2(&z, &z, &KernelParams::for_dim(1)).unwrap(), 0.0);
    let wrong = random_matrix(&mut rng, 5, 3);
    assert!(mmd2(&x, &wrong, &KernelParams::for_dim(4)).is_err());
}

#[test]
fn self_distance_is_zero_for_both_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_matrix(&mut rng, 30, 5);
    for m in Metric::ALL {
        assert_eq!(distance(m, &x, &x).unwrap(), 0.0);
    }
}
