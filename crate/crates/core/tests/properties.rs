use difflab_core::diffusion::{diffuse_sqrt, diffuse_trig, invert_to_eps, invert_to_x0};
use difflab_core::metrics::sliced_wasserstein;
use difflab_core::nn::checkpoint::{from_bytes, to_bytes};
use difflab_core::nn::{DenoiserModel, ModelConfig};
use difflab_core::oracle::{GaussianMixture, MixtureComponent};
use difflab_core::samplers::uniform_step_indices;
use difflab_core::{Batch, Schedule};
use proptest::prelude::*;

fn batch(rows: usize, cols: usize) -> impl Strategy<Value = Batch> {
    proptest::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |v| Batch::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trig_schedule_recomposes(total in 1usize..3000) {
        let s = Schedule::trig(total).unwrap();
        let mut prod = 1.0;
        prop_assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        prop_assert_eq!(s.alpha_bar(total).unwrap(), 0.0);
        prop_assert_eq!(s.beta(total).unwrap(), 1.0);
        for t in 1..total {
            prod *= 1.0 - s.beta(t).unwrap();
            prop_assert!((prod - s.alpha_bar(t).unwrap()).abs() < 1e-10);
            prop_assert!(s.alpha_bar(t).unwrap() < s.alpha_bar(t - 1).unwrap());
        }
    }

    #[test]
    fn step_indices_are_valid(total in 1usize..2000, frac in 0.0f64..1.0) {
        let steps = 1 + ((total - 1) as f64 * frac) as usize;
        let idx = uniform_step_indices(total, steps).unwrap();
        prop_assert_eq!(idx.len(), steps + 1);
        prop_assert_eq!(idx[0], total);
        prop_assert_eq!(*idx.last().unwrap(), 0);
        prop_assert!(idx.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn diffusion_forms_agree_and_invert(x0 in batch(3, 2), eps in batch(3, 2), t in 1usize..1000) {
        let s = Schedule::trig(1000).unwrap();
        let a = diffuse_trig(x0.view(), eps.view(), t, &s).unwrap();
        let b = diffuse_sqrt(x0.view(), eps.view(), t, &s).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
        let e = invert_to_eps(a.view(), x0.view(), t, &s).unwrap();
        prop_assert!(e.iter().zip(eps.iter()).all(|(p, q)| (p - q).abs() < 1e-9));
        let x = invert_to_x0(a.view(), eps.view(), t, &s).unwrap();
        prop_assert!(x.iter().zip(x0.iter()).all(|(p, q)| (p - q).abs() < 1e-9));
    }

    #[test]
    fn oracle_pair_is_self_consistent(
        means in proptest::collection::vec(-3.0f64..3.0, 3),
        vars in proptest::collection::vec(0.01f64..2.0, 3),
        x in batch(4, 1),
        t in 1usize..=1000,
    ) {
        let comps = (0..3)
            .map(|k| MixtureComponent { weight: 1.0 / 3.0, mean: vec![means[k]], variance: vars[k] })
            .collect();
        let gm = GaussianMixture::new(comps).unwrap();
        let s = Schedule::trig(1000).unwrap();
        let (c, sn) = (s.signal(t).unwrap(), s.noise(t).unwrap());
        let (a, b) = gm.posterior(x.view(), c, sn).unwrap();
        for i in 0..4 {
            prop_assert!((c * a[[i, 0]] + sn * b[[i, 0]] - x[[i, 0]]).abs() < 1e-12 * (1.0 + x[[i, 0]].abs()));
        }
    }

    #[test]
    fn sliced_wasserstein_is_symmetric_and_homogeneous(a in batch(20, 2), b in batch(15, 2), seed in any::<u64>()) {
        let ab = sliced_wasserstein(a.view(), b.view(), 8, seed).unwrap();
        let ba = sliced_wasserstein(b.view(), a.view(), 8, seed).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        let a3 = &a * 3.0;
        let b3 = &b * 3.0;
        let scaled = sliced_wasserstein(a3.view(), b3.view(), 8, seed).unwrap();
        prop_assert!((scaled - 3.0 * ab).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn checkpoint_round_trips(dim in 1usize..4, h1 in 1usize..9, h2 in 1usize..9, half in 1usize..4, seed in any::<u64>()) {
        let cfg = ModelConfig { hidden_dims: vec![h1, h2], time_embed_dim: 2 * half };
        let m = DenoiserModel::new(dim, &cfg, seed).unwrap();
        let bytes = to_bytes(&m);
        prop_assert_eq!(from_bytes(&bytes).unwrap(), m);
        for cut in [bytes.len() / 3, bytes.len() - 1] {
            prop_assert!(from_bytes(&bytes[..cut]).is_err());
        }
    }
}
