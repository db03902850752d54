use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_3};

use difflab_core::diffusion::diffuse_trig;
use difflab_core::oracle::{
    posterior_eps, posterior_x0, quadrature_posterior_x0, GaussianMixture, MixtureComponent,
};
use difflab_core::rng::{per_row_normals, SeededRng};
use difflab_core::{Error, Schedule};
use ndarray::array;

fn component(weight: f64, mean: f64, variance: f64) -> MixtureComponent {
    MixtureComponent {
        weight,
        mean: vec![mean],
        variance,
    }
}

#[test]
fn matches_quadrature_on_random_triples() {
    let sched = Schedule::trig(1000).unwrap();
    let mut rng = SeededRng::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = 0.1 + 0.8 * rng.uniform();
        let gm = GaussianMixture::new(vec![
            component(w, -3.0 + 6.0 * rng.uniform(), 0.05 + 2.0 * rng.uniform()),
            component(1.0 - w, -3.0 + 6.0 * rng.uniform(), 0.05 + 2.0 * rng.uniform()),
        ])
        .unwrap();
        let t = 1 + rng.below(999);
        // x_t drawn from the diffused mixture, so the posterior lies inside
        // the quadrature window
        let x0 = gm.sample(1, rng.below(1 << 30) as u64).unwrap()[[0, 0]];
        let x = sched.signal(t).unwrap() * x0 + sched.noise(t).unwrap() * rng.normal();
        let closed = posterior_x0(&gm, array![[x]].view(), t, &sched).unwrap()[[0, 0]];
        let quad = quadrature_posterior_x0(
            &gm,
            x,
            sched.signal(t).unwrap(),
            sched.noise(t).unwrap(),
            100_000,
        )
        .unwrap();
        worst = worst.max((closed - quad).abs());
    }
    assert!(worst < 1e-6, "worst deviation {worst}");
}

#[test]
fn matches_quadrature_at_pi_over_three() {
    let gm = GaussianMixture::new(vec![component(0.3, -1.0, 0.5), component(0.7, 2.0, 0.25)]).unwrap();
    let (c, s) = (FRAC_PI_3.cos(), FRAC_PI_3.sin());
    for x in [-2.0, -0.3, 0.0, 0.9, 1.7, 3.5] {
        let closed = gm.posterior(array![[x]].view(), c, s).unwrap().0[[0, 0]];
        let quad = quadrature_posterior_x0(&gm, x, c, s, 100_000).unwrap();
        assert!((closed - quad).abs() < 1e-6, "x = {x}");
    }
}

#[test]
fn closed_form_examples() {
    let sched = Schedule::trig(1000).unwrap();
    let unit = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
    let x0 = posterior_x0(&unit, array![[1.0]].view(), 500, &sched).unwrap();
    let eps = posterior_eps(&unit, array![[1.0]].view(), 500, &sched).unwrap();
    assert!((x0[[0, 0]] - FRAC_1_SQRT_2).abs() < 1e-12);
    assert!((eps[[0, 0]] - FRAC_1_SQRT_2).abs() < 1e-12);

    let sym = GaussianMixture::new(vec![component(0.5, -2.0, 0.3), component(0.5, 2.0, 0.3)]).unwrap();
    for t in [1, 300, 999, 1000] {
        assert_eq!(posterior_x0(&sym, array![[0.0]].view(), t, &sched).unwrap()[[0, 0]], 0.0);
    }
    let x = array![[0.4], [-1.2]];
    assert_eq!(posterior_x0(&sym, x.view(), 0, &sched).unwrap(), x);
    assert!(matches!(
        posterior_eps(&sym, x.view(), 0, &sched),
        Err(Error::SingularInversion { .. })
    ));
    // zero-mean mixture at t = T: ε posterior is x itself
    assert_eq!(posterior_eps(&sym, x.view(), 1000, &sched).unwrap(), x);
}

#[test]
fn posterior_pair_recomposes_the_input() {
    let sched = Schedule::trig(1000).unwrap();
    let gm = difflab_core::datasets::ring_mixture(true);
    let x = per_row_normals(3, 500, 2) * 1.5;
    for t in [1, 10, 200, 500, 800, 990, 1000] {
        let a = posterior_x0(&gm, x.view(), t, &sched).unwrap();
        let b = posterior_eps(&gm, x.view(), t, &sched).unwrap();
        let back = diffuse_trig(a.view(), b.view(), t, &sched).unwrap();
        let err = back.iter().zip(x.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "t = {t}: {err}");
    }
}

#[test]
fn mixture_json_validation() {
    let ok: GaussianMixture = serde_json::from_str(
        r#"{"components":[{"weight":0.25,"mean":[0,1],"variance":0.5},{"weight":0.75,"mean":[1,1],"variance":2}]}"#,
    )
    .unwrap();
    assert_eq!(ok.dim(), 2);
    for bad in [
        r#"{"components":[{"weight":0.5,"mean":[0],"variance":1}]}"#,
        r#"{"components":[{"weight":1,"mean":[0],"variance":0}]}"#,
        r#"{"components":[{"weight":0.5,"mean":[0],"variance":1},{"weight":0.5,"mean":[0,1],"variance":1}]}"#,
        r#"{"components":[{"weight":1,"mean":[0],"variance":1,"extra":3}]}"#,
    ] {
        assert!(serde_json::from_str::<GaussianMixture>(bad).is_err(), "{bad}");
    }
}

#[test]
fn sampling_statistics() {
    let unit = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
    let x = unit.sample(100_000, 17).unwrap();
    let col = x.column(0);
    assert!(col.mean().unwrap().abs() < 0.02);
    assert!((col.var(1.0) - 1.0).abs() < 0.03);
    assert_eq!(x, unit.sample(100_000, 17).unwrap());
}
