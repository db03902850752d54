use std::f64::consts::PI;

use difflab_core::metrics::{distance_report, median_bandwidth, mmd_rbf, sliced_wasserstein};
use difflab_core::rng::{per_row_normals, SeededRng};
use difflab_core::Batch;

fn shifted(seed: u64, n: usize, d: f64) -> Batch {
    let mut x = per_row_normals(seed, n, 2);
    x.column_mut(0).mapv_inplace(|v| v + d);
    x
}

#[test]
fn shifted_gaussians_give_four_over_pi() {
    // brute-force Monte Carlo of E|2·u₁| over uniform directions
    let mut rng = SeededRng::new(123);
    let mc: f64 = (0..200_000)
        .map(|_| 2.0 * (2.0 * PI * rng.uniform()).cos().abs())
        .sum::<f64>()
        / 200_000.0;
    assert!((mc - 4.0 / PI).abs() < 0.01);

    let a = shifted(1, 10_000, 0.0);
    let b = shifted(2, 10_000, 2.0);
    let sw = sliced_wasserstein(a.view(), b.view(), 256, 9).unwrap();
    assert!((sw - 4.0 / PI).abs() < 0.05, "{sw}");
}

#[test]
fn symmetry_and_scaling() {
    let a = shifted(3, 800, 0.0);
    let b = shifted(4, 1000, 1.5);
    let ab = sliced_wasserstein(a.view(), b.view(), 64, 5).unwrap();
    let ba = sliced_wasserstein(b.view(), a.view(), 64, 5).unwrap();
    assert!((ab - ba).abs() < 1e-12);
    let h = median_bandwidth(a.view(), b.view()).unwrap();
    let m1 = mmd_rbf(a.view(), b.view(), h).unwrap();
    let m2 = mmd_rbf(b.view(), a.view(), h).unwrap();
    assert!((m1 - m2).abs() < 1e-12);

    let a2 = &a * 2.0;
    let b2 = &b * 2.0;
    let scaled = sliced_wasserstein(a2.view(), b2.view(), 64, 5).unwrap();
    assert!((scaled - 2.0 * ab).abs() < 1e-9);
}

#[test]
fn separation_is_monotone() {
    let a = shifted(5, 10_000, 0.0);
    let sw: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
        .iter()
        .map(|&d| sliced_wasserstein(a.view(), shifted(6, 10_000, d).view(), 128, 1).unwrap())
        .collect();
    assert!(sw.windows(2).all(|w| w[0] < w[1]), "{sw:?}");
}

#[test]
fn mmd_limits() {
    let a = shifted(7, 50, 0.0);
    let b = shifted(8, 60, 3.0);
    assert!(mmd_rbf(a.view(), b.view(), 1e6).unwrap().abs() < 1e-6);
    assert!(mmd_rbf(a.view(), a.view(), 0.3).unwrap().abs() < 1e-15);
    assert!(mmd_rbf(a.view(), b.view(), 0.0).is_err());
}

#[test]
fn report_fields() {
    let a = shifted(9, 300, 0.0);
    let r = distance_report(a.view(), a.view(), 32, None, 2).unwrap();
    assert_eq!(r.sliced_wasserstein, 0.0);
    assert!(r.mmd_rbf.abs() < 1e-12);
    assert!(r.bandwidth > 0.0);
    assert_eq!((r.n_a, r.n_b, r.n_projections), (300, 300, 32));
    assert!(sliced_wasserstein(Batch::zeros((0, 2)).view(), a.view(), 4, 0).is_err());
}
