use difflab_core::datasets::{
    analytic_mixture, generate, ring_mixture, write_csv, DatasetKind, DatasetSpec, Normalization,
    RING_MODES,
};
use difflab_core::metrics::sliced_wasserstein;

fn ring(n: usize, seed: u64, normalization: Normalization) -> DatasetSpec {
    DatasetSpec {
        kind: DatasetKind::GaussianRing,
        n,
        seed,
        normalization,
    }
}

#[test]
fn batch_agrees_with_its_mixture_description() {
    let spec = ring(10_000, 21, Normalization::Standardize);
    let batch = generate(&spec).unwrap();
    let gm = analytic_mixture(&spec).unwrap();
    let other = gm.sample(10_000, 22).unwrap();
    let sw = sliced_wasserstein(batch.view(), other.view(), 256, 23).unwrap();
    assert!(sw < 0.05, "sliced Wasserstein {sw}");
}

#[test]
fn every_generator_is_standardized_and_deterministic() {
    let kinds = [
        DatasetKind::GaussianRing,
        DatasetKind::SwissRoll,
        DatasetKind::Checkerboard,
        DatasetKind::Mixture {
            mixture: ring_mixture(false),
        },
    ];
    for kind in kinds {
        let spec = DatasetSpec {
            kind,
            n: 5_000,
            seed: 8,
            normalization: Normalization::Standardize,
        };
        let x = generate(&spec).unwrap();
        assert_eq!(x, generate(&spec).unwrap());
        for col in x.columns() {
            assert!(col.mean().unwrap().abs() < 1e-9);
            assert!((col.var(0.0) - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn ring_clusters_are_balanced() {
    let n = 80_000;
    let x = generate(&ring(n, 3, Normalization::None)).unwrap();
    let mut counts = [0usize; RING_MODES];
    for row in x.rows() {
        let angle = row[1].atan2(row[0]).rem_euclid(std::f64::consts::TAU);
        let k = (angle / (std::f64::consts::TAU / RING_MODES as f64)).round() as usize % RING_MODES;
        counts[k] += 1;
    }
    let expect = n as f64 / RING_MODES as f64;
    let bound = 3.0 * (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
    for c in counts {
        assert!((c as f64 - expect).abs() <= bound, "{counts:?}");
    }
}

#[test]
fn csv_export() {
    let x = generate(&ring(3, 1, Normalization::None)).unwrap();
    let mut buf = Vec::new();
    write_csv(&x, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x0,x1"));
    assert_eq!(text.lines().count(), 4);
    assert!(generate(&ring(0, 1, Normalization::None)).is_err());
}
