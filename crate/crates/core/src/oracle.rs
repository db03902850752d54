//! Closed-form Bayes denoiser for isotropic Gaussian mixtures.
//!
//! For data x0 ~ Σ_k w_k·N(μ_k, σ_k² I) and x = c·x0 + s·ε, the marginal of x
//! is Σ_k w_k·N(c·μ_k, v_k I) with v_k = c²σ_k² + s². The posterior mean of x0
//! is Σ_k γ_k·[μ_k + c·σ_k²/v_k·(x − c·μ_k)] and that of ε simplifies to
//! s·Σ_k γ_k·(x − c·μ_k)/v_k, which stays finite at s = 0.

use ndarray::{Array1, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::schedules::Schedule;
use crate::Batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Per-coordinate variance σ².
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
    means: Vec<Array1<f64>>,
    log_weights: Vec<f64>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    components: Vec<MixtureComponent>,
}

impl TryFrom<RawMixture> for GaussianMixture {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        GaussianMixture::new(raw.components)
    }
}

impl From<GaussianMixture> for RawMixture {
    fn from(gm: GaussianMixture) -> Self {
        RawMixture {
            components: gm.components,
        }
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("mixture dimension must be >= 1".into()));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "component {k} has dimension {} (expected {dim})",
                    c.mean.len()
                )));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!("component {k}: weight must be > 0")));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "component {k}: variance must be > 0"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            means: components.iter().map(|c| Array1::from(c.mean.clone())).collect(),
            log_weights: components.iter().map(|c| c.weight.ln()).collect(),
            components,
            dim,
        })
    }

    /// Single isotropic Gaussian N(mean, variance·I).
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![MixtureComponent {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn mean(&self) -> Array1<f64> {
        let mut m = Array1::zeros(self.dim);
        for (c, mu) in self.components.iter().zip(&self.means) {
            m.scaled_add(c.weight, mu);
        }
        m
    }

    /// n i.i.d. draws; a pure function of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Batch> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut out = Batch::zeros((n, self.dim));
        for mut row in out.rows_mut() {
            let k = self.pick_component(rng.uniform());
            let sd = self.components[k].variance.sqrt();
            for (v, mu) in row.iter_mut().zip(self.means[k].iter()) {
                *v = mu + sd * rng.normal();
            }
        }
        Ok(out)
    }

    fn pick_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return k;
            }
        }
        self.components.len() - 1
    }

    fn posterior_row(&self, x: ArrayView1<f64>, c: f64, s: f64, x0: &mut [f64], eps: &mut [f64]) {
        let d = self.dim as f64;
        let k_count = self.components.len();
        let mut logp = Vec::with_capacity(k_count);
        let mut var = Vec::with_capacity(k_count);
        for (k, comp) in self.components.iter().enumerate() {
            let v = c * c * comp.variance + s * s;
            let mut sq = 0.0;
            for (xi, mi) in x.iter().zip(self.means[k].iter()) {
                let r = xi - c * mi;
                sq += r * r;
            }
            logp.push(self.log_weights[k] - 0.5 * d * v.ln() - 0.5 * sq / v);
            var.push(v);
        }
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = logp.iter().map(|l| (l - max).exp()).sum();
        x0.iter_mut().for_each(|v| *v = 0.0);
        eps.iter_mut().for_each(|v| *v = 0.0);
        for (k, comp) in self.components.iter().enumerate() {
            let g = (logp[k] - max).exp() / norm;
            let gain = c * comp.variance / var[k];
            for (i, (&xi, &mi)) in x.iter().zip(self.means[k].iter()).enumerate() {
                let r = xi - c * mi;
                x0[i] += g * (mi + gain * r);
                eps[i] += g * s * r / var[k];
            }
        }
    }

    /// Posterior means (E[x0 | x], E[ε | x]) for x = c·x0 + s·ε.
    pub fn posterior(&self, x: ArrayView2<f64>, c: f64, s: f64) -> Result<(Batch, Batch)> {
        if x.ncols() != self.dim {
            return Err(Error::Shape(format!(
                "mixture dim {} vs batch dim {}",
                self.dim,
                x.ncols()
            )));
        }
        if s == 0.0 {
            return Ok((x.to_owned(), Batch::zeros(x.raw_dim())));
        }
        let mut x0 = Batch::zeros(x.raw_dim());
        let mut eps = Batch::zeros(x.raw_dim());
        Zip::from(x.rows())
            .and(x0.rows_mut())
            .and(eps.rows_mut())
            .par_for_each(|row, mut a, mut b| {
                self.posterior_row(
                    row,
                    c,
                    s,
                    a.as_slice_mut().unwrap(),
                    b.as_slice_mut().unwrap(),
                )
            });
        Ok((x0, eps))
    }
}

/// E[x0 | x_t] under the mixture.
pub fn posterior_x0(
    gm: &GaussianMixture,
    x_t: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Batch> {
    Ok(gm.posterior(x_t, sched.signal(t)?, sched.noise(t)?)?.0)
}

/// E[ε | x_t] under the mixture; undefined at t = 0.
pub fn posterior_eps(
    gm: &GaussianMixture,
    x_t: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Batch> {
    let s = sched.noise(t)?;
    if t == 0 || s == 0.0 {
        return Err(Error::SingularInversion { op: "posterior_eps", t });
    }
    Ok(gm.posterior(x_t, sched.signal(t)?, s)?.1)
}

/// E[x0 | x] for a one-dimensional mixture by trapezoidal quadrature.
///
/// Integrates over [min μ − 10·max σ, max μ + 10·max σ] with `nodes` points.
/// Independent of the closed form; used to cross-check it.
pub fn quadrature_posterior_x0(gm: &GaussianMixture, x: f64, c: f64, s: f64, nodes: usize) -> Result<f64> {
    if gm.dim() != 1 {
        return Err(Error::InvalidArgument("quadrature oracle is one-dimensional".into()));
    }
    if s <= 0.0 || nodes < 2 {
        return Err(Error::InvalidArgument("quadrature needs s > 0 and at least 2 nodes".into()));
    }
    let comps = gm.components();
    let sd_max = comps.iter().map(|k| k.variance.sqrt()).fold(0.0, f64::max);
    let lo = comps.iter().map(|k| k.mean[0]).fold(f64::INFINITY, f64::min) - 10.0 * sd_max;
    let hi = comps.iter().map(|k| k.mean[0]).fold(f64::NEG_INFINITY, f64::max) + 10.0 * sd_max;
    let h = (hi - lo) / (nodes - 1) as f64;
    let log_joint = |z: f64| {
        let prior = comps
            .iter()
            .map(|k| k.weight * (-(z - k.mean[0]).powi(2) / (2.0 * k.variance)).exp() / k.variance.sqrt())
            .sum::<f64>();
        prior.ln() - (x - c * z).powi(2) / (2.0 * s * s)
    };
    let logs: Vec<f64> = (0..nodes).map(|i| log_joint(lo + i as f64 * h)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, l) in logs.iter().enumerate() {
        let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
        let p = w * (l - top).exp();
        num += p * (lo + i as f64 * h);
        den += p;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn two_sym(mu: f64) -> GaussianMixture {
        GaussianMixture::new(vec![
            MixtureComponent { weight: 0.5, mean: vec![mu], variance: 0.3 },
            MixtureComponent { weight: 0.5, mean: vec![-mu], variance: 0.3 },
        ])
        .unwrap()
    }

    #[test]
    fn unit_gaussian_posterior() {
        let gm = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let s = Schedule::trig(1000).unwrap();
        let x = array![[1.0]];
        let x0 = posterior_x0(&gm, x.view(), 500, &s).unwrap();
        let e = posterior_eps(&gm, x.view(), 500, &s).unwrap();
        assert!((x0[[0, 0]] - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((e[[0, 0]] - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn t_zero_is_identity() {
        let gm = two_sym(2.0);
        let s = Schedule::trig(1000).unwrap();
        let x = array![[0.7], [-3.1]];
        assert_eq!(posterior_x0(&gm, x.view(), 0, &s).unwrap(), x);
        assert!(matches!(
            posterior_eps(&gm, x.view(), 0, &s),
            Err(Error::SingularInversion { .. })
        ));
    }

    #[test]
    fn symmetric_pair_at_origin() {
        let gm = two_sym(1.5);
        let s = Schedule::trig(100).unwrap();
        for t in [1, 30, 77, 100] {
            let r = posterior_x0(&gm, array![[0.0]].view(), t, &s).unwrap();
            assert!(r[[0, 0]].abs() < 1e-15);
        }
    }

    #[test]
    fn pure_noise_end() {
        // zero-mean mixture: at t = T, E[ε | x] = x and E[x0 | x] = prior mean
        let gm = two_sym(1.5);
        let s = Schedule::trig(100).unwrap();
        let x = array![[0.4], [-2.0]];
        let e = posterior_eps(&gm, x.view(), 100, &s).unwrap();
        assert_eq!(e, x);
        let x0 = posterior_x0(&gm, x.view(), 100, &s).unwrap();
        assert!(x0.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn self_consistency() {
        let gm = GaussianMixture::new(vec![
            MixtureComponent { weight: 0.2, mean: vec![1.0, -1.0], variance: 0.05 },
            MixtureComponent { weight: 0.8, mean: vec![-0.5, 2.0], variance: 0.4 },
        ])
        .unwrap();
        let s = Schedule::trig(1000).unwrap();
        let x = gm.sample(64, 3).unwrap();
        for t in [1, 10, 400, 999, 1000] {
            let a = posterior_x0(&gm, x.view(), t, &s).unwrap();
            let b = posterior_eps(&gm, x.view(), t, &s).unwrap();
            let back = crate::diffusion::diffuse_trig(a.view(), b.view(), t, &s).unwrap();
            for (p, q) in back.iter().zip(x.iter()) {
                assert!((p - q).abs() < 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn validation() {
        let bad_weights = GaussianMixture::new(vec![
            MixtureComponent { weight: 0.5, mean: vec![0.0], variance: 1.0 },
            MixtureComponent { weight: 0.4, mean: vec![1.0], variance: 1.0 },
        ]);
        assert!(bad_weights.is_err());
        assert!(GaussianMixture::gaussian(vec![0.0], 0.0).is_err());
        assert!(GaussianMixture::new(vec![]).is_err());
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let gm = two_sym(1.0);
        let text = serde_json::to_string(&gm).unwrap();
        let back: GaussianMixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, gm);
        let unknown = r#"{"components":[{"weight":1.0,"mean":[0.0],"variance":1.0,"x":1}]}"#;
        assert!(serde_json::from_str::<GaussianMixture>(unknown).is_err());
        let bad = r#"{"components":[{"weight":0.5,"mean":[0.0],"variance":1.0}]}"#;
        assert!(serde_json::from_str::<GaussianMixture>(bad).is_err());
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let gm = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let x = gm.sample(100_000, 11).unwrap();
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let var = x.mapv(|v| (v - mean).powi(2)).sum() / n;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
        assert_eq!(gm.sample(50, 5).unwrap(), gm.sample(50, 5).unwrap());
        assert!(gm.sample(0, 5).is_err());
    }

    #[test]
    fn single_component_draws_stay_there() {
        let gm = GaussianMixture::gaussian(vec![50.0, -50.0], 0.01).unwrap();
        let x = gm.sample(1000, 2).unwrap();
        assert!(x.column(0).iter().all(|v| (v - 50.0).abs() < 1.0));
        assert!(x.column(1).iter().all(|v| (v + 50.0).abs() < 1.0));
    }
}
