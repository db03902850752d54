//! Reverse-process samplers.
//!
//! All samplers walk a strictly decreasing subsequence of step indices from
//! T down to 0. The deterministic ones (DDIM, cold diffusion and the gradient
//! samplers) are pure functions of the initial noise; DDPM ancestral sampling
//! also draws fresh noise from a per-chain stream.
//!
//! The gradient samplers integrate dx/dη = −sin(η)·x̂0 + cos(η)·ε̂ from η = π/2
//! down to η = 0. Intermediate Runge-Kutta stages query the denoiser at the
//! stage's continuous angle.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use ndarray::{ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::denoiser::{arc_coefficients, Denoiser};
use crate::diffusion::{combine, invert_to_eps};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::schedules::Schedule;
use crate::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    DdpmAncestral,
    Ddim,
    Cold,
    GradEuler,
    GradRk2,
    GradRk4,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 6] = [
        SamplerKind::DdpmAncestral,
        SamplerKind::Ddim,
        SamplerKind::Cold,
        SamplerKind::GradEuler,
        SamplerKind::GradRk2,
        SamplerKind::GradRk4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::DdpmAncestral => "ddpm_ancestral",
            SamplerKind::Ddim => "ddim",
            SamplerKind::Cold => "cold",
            SamplerKind::GradEuler => "grad_euler",
            SamplerKind::GradRk2 => "grad_rk2",
            SamplerKind::GradRk4 => "grad_rk4",
        }
    }

    pub fn integrator(self) -> Option<Integrator> {
        match self {
            SamplerKind::GradEuler => Some(Integrator::Euler),
            SamplerKind::GradRk2 => Some(Integrator::Rk2),
            SamplerKind::GradRk4 => Some(Integrator::Rk4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    /// Explicit midpoint rule.
    Rk2,
    /// Classical four-stage Runge-Kutta.
    Rk4,
}

impl Integrator {
    pub const ALL: [Integrator; 3] = [Integrator::Euler, Integrator::Rk2, Integrator::Rk4];

    pub fn name(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk2 => "rk2",
            Integrator::Rk4 => "rk4",
        }
    }

    /// Theoretical global order of accuracy.
    pub fn order(self) -> f64 {
        match self {
            Integrator::Euler => 1.0,
            Integrator::Rk2 => 2.0,
            Integrator::Rk4 => 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub steps: usize,
    pub seed: u64,
    pub record_trajectory: bool,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, steps: usize, seed: u64) -> Self {
        Self {
            kind,
            steps,
            seed,
            record_trajectory: false,
        }
    }

    pub fn with_trajectory(mut self) -> Self {
        self.record_trajectory = true;
        self
    }

    pub fn step_indices(&self, total: usize) -> Result<Vec<usize>> {
        uniform_step_indices(total, self.steps)
    }
}

/// `steps + 1` indices uniform in t, from `total` down to 0.
pub fn uniform_step_indices(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        return Err(Error::InvalidArgument(format!(
            "sampler steps must be in 1..={total}, got {steps}"
        )));
    }
    Ok((0..=steps)
        .map(|k| (2 * total * (steps - k) + steps) / (2 * steps))
        .collect())
}

/// One recorded state of every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step_index: usize,
    pub eta: f64,
    pub x: Batch,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
}

impl Trajectory {
    /// Rows `chain,step_index,eta,component_index,value`, frame by frame.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "chain,step_index,eta,component_index,value")?;
        for f in &self.frames {
            let eta = crate::fmt_f64(f.eta);
            for (chain, row) in f.x.rows().into_iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    writeln!(w, "{chain},{},{eta},{j},{}", f.step_index, crate::fmt_f64(*v))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub samples: Batch,
    pub trajectory: Option<Trajectory>,
}

struct Recorder {
    traj: Option<Trajectory>,
}

impl Recorder {
    fn new(on: bool) -> Self {
        Self {
            traj: on.then(Trajectory::default),
        }
    }

    fn push(&mut self, step_index: usize, eta: f64, x: &Batch) {
        if let Some(t) = self.traj.as_mut() {
            t.frames.push(Frame {
                step_index,
                eta,
                x: x.clone(),
            });
        }
    }

    fn finish(self, samples: Batch) -> SampleOutput {
        SampleOutput {
            samples,
            trajectory: self.traj,
        }
    }
}

fn chain_stream(seed: u64, chain: usize) -> SeededRng {
    SeededRng::new(seed).split(chain as u64)
}

/// Initial x_T ~ N(0, I); row `i` comes from chain stream `i` of `seed`.
pub fn initial_noise(chains: usize, dim: usize, seed: u64) -> Batch {
    let mut x = Batch::zeros((chains, dim));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let mut rng = chain_stream(seed, i).split(0);
        row.iter_mut().for_each(|v| *v = rng.normal());
    }
    x
}

/// Draw `chains` initial states from `cfg.seed` and run the configured sampler.
pub fn sample(
    den: &dyn Denoiser,
    cfg: &SamplerConfig,
    sched: &Schedule,
    chains: usize,
    dim: usize,
) -> Result<SampleOutput> {
    if chains == 0 || dim == 0 {
        return Err(Error::InvalidArgument("chains and dim must be >= 1".into()));
    }
    sample_from(den, cfg, sched, initial_noise(chains, dim, cfg.seed))
}

/// Run the configured sampler from a given x_T.
pub fn sample_from(
    den: &dyn Denoiser,
    cfg: &SamplerConfig,
    sched: &Schedule,
    x_init: Batch,
) -> Result<SampleOutput> {
    match cfg.kind {
        SamplerKind::Ddim => sample_ddim(den, cfg, sched, x_init),
        SamplerKind::Cold => sample_cold(den, cfg, sched, x_init),
        SamplerKind::DdpmAncestral => sample_ddpm_ancestral(den, cfg, sched, x_init),
        SamplerKind::GradEuler | SamplerKind::GradRk2 | SamplerKind::GradRk4 => {
            sample_gradient(den, cfg, sched, x_init)
        }
    }
}

fn checked_denoise(den: &dyn Denoiser, x: ArrayView2<f64>, eta: f64) -> Result<(Batch, Batch)> {
    let (x0, eps) = den.denoise(x, eta)?;
    if x0.dim() != x.dim() || eps.dim() != x.dim() {
        return Err(Error::Shape(format!(
            "denoiser returned {:?}/{:?} for input {:?}",
            x0.dim(),
            eps.dim(),
            x.dim()
        )));
    }
    Ok((x0, eps))
}

/// Deterministic DDIM: x_next = cos(η_next)·x̂0 + sin(η_next)·ε̂.
pub fn sample_ddim(
    den: &dyn Denoiser,
    cfg: &SamplerConfig,
    sched: &Schedule,
    x_init: Batch,
) -> Result<SampleOutput> {
    let idx = cfg.step_indices(sched.steps())?;
    let mut rec = Recorder::new(cfg.record_trajectory);
    let mut x = x_init;
    rec.push(idx[0], sched.eta(idx[0])?, &x);
    for w in idx.windows(2) {
        let (t, next) = (w[0], w[1]);
        let (x0, eps) = checked_denoise(den, x.view(), sched.eta(t)?)?;
        x = combine(sched.signal(next)?, x0.view(), sched.noise(next)?, eps.view());
        rec.push(next, sched.eta(next)?, &x);
    }
    Ok(rec.finish(x))
}

/// Cold-diffusion sampling: uses only the x0 head and derives ε̂ by inversion.
pub fn sample_cold(
    den: &dyn Denoiser,
    cfg: &SamplerConfig,
    sched: &Schedule,
    x_init: Batch,
) -> Result<SampleOutput> {
    let idx = cfg.step_indices(sched.steps())?;
    let mut rec = Recorder::new(cfg.record_trajectory);
    let mut x = x_init;
    rec.push(idx[0], sched.eta(idx[0])?, &x);
    for w in idx.windows(2) {
        let (t, next) = (w[0], w[1]);
        let (x0, _) = checked_denoise(den, x.view(), sched.eta(t)?)?;
        let eps = invert_to_eps(x.view(), x0.view(), t, sched)?;
        x = combine(sched.signal(next)?, x0.view(), sched.noise(next)?, eps.view());
        rec.push(next, sched.eta(next)?, &x);
    }
    Ok(rec.finish(x))
}

/// DDPM ancestral sampling with posterior variance β̃.
///
/// On a subsequence the step t → t' uses α = ᾱ_t/ᾱ_t' and β = 1 − α. Where
/// ᾱ_t = 0 (t = T under the trig schedule) the ε-form mean divides by
/// √α = 0, so the equivalent x0-form mean √ᾱ_t'·x̂0 is used for that step.
pub fn sample_ddpm_ancestral(
    den: &dyn Denoiser,
    cfg: &SamplerConfig,
    sched: &Schedule,
    x_init: Batch,
) -> Result<SampleOutput> {
    let idx = cfg.step_indices(sched.steps())?;
    let mut rec = Recorder::new(cfg.record_trajectory);
    let mut streams: Vec<SeededRng> = (0..x_init.nrows())
        .map(|i| chain_stream(cfg.seed, i).split(1))
        .collect();
    let mut x = x_init;
    rec.push(idx[0], sched.eta(idx[0])?, &x);
    for w in idx.windows(2) {
        let (t, next) = (w[0], w[1]);
        let (x0, eps) = checked_denoise(den, x.view(), sched.eta(t)?)?;
        let ab_t = sched.alpha_bar(t)?;
        let ab_next = sched.alpha_bar(next)?;
        let (alpha, beta) = if ab_t > 0.0 {
            let a = ab_t / ab_next;
            (a, 1.0 - a)
        } else {
            (0.0, 1.0)
        };
        let mut mean = if alpha > 0.0 {
            let k = beta / (1.0 - ab_t).sqrt();
            let inv = 1.0 / alpha.sqrt();
            Zip::from(&x).and(&eps).map_collect(|&x, &e| (x - k * e) * inv)
        } else {
            x0.mapv(|v| ab_next.sqrt() * v)
        };
        if next > 0 {
            let var = beta * (1.0 - ab_next) / (1.0 - ab_t);
            let sd = var.max(0.0).sqrt();
            for (mut row, rng) in mean.rows_mut().into_iter().zip(streams.iter_mut()) {
                row.iter_mut().for_each(|v| *v += sd * rng.normal());
            }
        }
        x = mean;
        rec.push(next, sched.eta(next)?, &x);
    }
    Ok(rec.finish(x))
}

/// −sin(η)·x̂0 + cos(η)·ε̂ evaluated through the denoiser.
pub fn velocity_field(den: &dyn Denoiser, x: ArrayView2<f64>, eta: f64) -> Result<Batch> {
    let (x0, eps) = checked_denoise(den, x, eta)?;
    let (c, s) = arc_coefficients(eta);
    Ok(combine(-s, x0.view(), c, eps.view()))
}

/// One integrator step from angle `eta` down to `eta_next`.
pub fn integrate_step(
    den: &dyn Denoiser,
    integrator: Integrator,
    x: ArrayView2<f64>,
    eta: f64,
    eta_next: f64,
) -> Result<Batch> {
    let h = eta - eta_next;
    let step = |k: &Batch, f: f64| combine(1.0, x, -f * h, k.view());
    match integrator {
        Integrator::Euler => {
            let k1 = velocity_field(den, x, eta)?;
            Ok(step(&k1, 1.0))
        }
        Integrator::Rk2 => {
            let k1 = velocity_field(den, x, eta)?;
            let k2 = velocity_field(den, step(&k1, 0.5).view(), eta - 0.5 * h)?;
            Ok(step(&k2, 1.0))
        }
        Integrator::Rk4 => {
            let mid = eta - 0.5 * h;
            let k1 = velocity_field(den, x, eta)?;
            let k2 = velocity_field(den, step(&k1, 0.5).view(), mid)?;
            let k3 = velocity_field(den, step(&k2, 0.5).view(), mid)?;
            let k4 = velocity_field(den, step(&k3, 1.0).view(), eta_next)?;
            let mut out = x.to_owned();
            Zip::from(&mut out)
                .and(&k1)
                .and(&k2)
                .and(&k3)
                .and(&k4)
                .for_each(|o, &a, &b, &c, &d| *o -= h / 6.0 * (a + 2.0 * b + 2.0 * c + d));
            Ok(out)
        }
    }
}

/// Gradient-update sampling: x_next = x − Δη·v̂ (Euler) or its RK2/RK4 extensions.
pub fn sample_gradient(
    den: &dyn Denoiser,
    cfg: &SamplerConfig,
    sched: &Schedule,
    x_init: Batch,
) -> Result<SampleOutput> {
    let integrator = cfg.kind.integrator().ok_or_else(|| {
        Error::InvalidArgument(format!("{} is not a gradient sampler", cfg.kind.name()))
    })?;
    let idx = cfg.step_indices(sched.steps())?;
    let mut rec = Recorder::new(cfg.record_trajectory);
    let mut x = x_init;
    rec.push(idx[0], sched.eta(idx[0])?, &x);
    for w in idx.windows(2) {
        let (eta, eta_next) = (sched.eta(w[0])?, sched.eta(w[1])?);
        x = integrate_step(den, integrator, x.view(), eta, eta_next)?;
        rec.push(w[1], eta_next, &x);
    }
    Ok(rec.finish(x))
}

/// ‖DDIM step − Euler step‖ (Frobenius over the batch) from angle `eta` with gap `delta_eta`.
///
/// Both steps share one denoiser evaluation. For self-consistent estimates
/// (x = cos η·x̂0 + sin η·ε̂) the difference is O(Δη²).
pub fn ddim_euler_discrepancy(
    den: &dyn Denoiser,
    x: ArrayView2<f64>,
    eta: f64,
    delta_eta: f64,
) -> Result<f64> {
    if delta_eta < 0.0 || delta_eta > eta {
        return Err(Error::InvalidArgument(format!(
            "delta_eta {delta_eta} must lie in [0, {eta}]"
        )));
    }
    let (x0, eps) = checked_denoise(den, x, eta)?;
    let (c, s) = arc_coefficients(eta);
    let (cn, sn) = arc_coefficients(eta - delta_eta);
    let mut sq = 0.0;
    Zip::from(&x)
        .and(&x0)
        .and(&eps)
        .for_each(|&xv, &a, &b| {
            let ddim = cn * a + sn * b;
            let euler = xv - delta_eta * (-s * a + c * b);
            sq += (ddim - euler).powi(2);
        });
    Ok(sq.sqrt())
}

/// DDIM/Euler discrepancy for the grid step t → t − 1.
pub fn ddim_euler_equivalence_check(
    den: &dyn Denoiser,
    t: usize,
    x_t: ArrayView2<f64>,
    sched: &Schedule,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain {
            op: "ddim_euler_equivalence_check",
            t,
        });
    }
    let eta = sched.eta(t)?;
    ddim_euler_discrepancy(den, x_t, eta, eta - sched.eta(t - 1)?)
}

/// Integrate from η = π/2 to 0 in `steps` equal angle increments.
///
/// Unlike [`sample_gradient`], the grid is not tied to a schedule, so
/// `steps` may exceed T.
pub fn integrate_uniform(
    den: &dyn Denoiser,
    integrator: Integrator,
    x_init: ArrayView2<f64>,
    steps: usize,
) -> Result<Batch> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let eta_at = |k: usize| FRAC_PI_2 * (steps - k) as f64 / steps as f64;
    let mut x = x_init.to_owned();
    for k in 0..steps {
        x = integrate_step(den, integrator, x.view(), eta_at(k), eta_at(k + 1))?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub integrator: Integrator,
    pub steps: usize,
    /// Root-mean-square endpoint deviation from the reference solution.
    pub error: f64,
}

/// Endpoint error against a fine RK4 reference for every integrator and step count.
pub fn convergence_study(
    den: &dyn Denoiser,
    x_init: ArrayView2<f64>,
    step_counts: &[usize],
    reference_steps: usize,
) -> Result<Vec<ConvergencePoint>> {
    let reference = integrate_uniform(den, Integrator::Rk4, x_init, reference_steps)?;
    let mut out = Vec::new();
    for integrator in Integrator::ALL {
        for &steps in step_counts {
            let x = integrate_uniform(den, integrator, x_init, steps)?;
            let mse = Zip::from(&x)
                .and(&reference)
                .fold(0.0, |acc, a, b| acc + (a - b).powi(2))
                / x.len() as f64;
            out.push(ConvergencePoint {
                integrator,
                steps,
                error: mse.sqrt(),
            });
        }
    }
    Ok(out)
}

/// Least-squares order estimate: minus the slope of log(error) against log(steps).
pub fn fitted_order(points: &[ConvergencePoint], integrator: Integrator) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.integrator == integrator)
        .map(|p| ((p.steps as f64).ln(), p.error.ln()))
        .collect();
    if pts.len() < 2 || pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cannot fit order for {} from {} usable points",
            integrator.name(),
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// Write convergence points as `integrator,steps,error`.
pub fn write_convergence_csv<W: Write>(points: &[ConvergencePoint], mut w: W) -> Result<()> {
    writeln!(w, "integrator,steps,error")?;
    for p in points {
        writeln!(w, "{},{},{}", p.integrator.name(), p.steps, crate::fmt_f64(p.error))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_indices() {
        assert_eq!(uniform_step_indices(1000, 1).unwrap(), vec![1000, 0]);
        assert_eq!(uniform_step_indices(10, 4).unwrap(), vec![10, 8, 5, 3, 0]);
        let full = uniform_step_indices(7, 7).unwrap();
        assert_eq!(full, (0..=7).rev().collect::<Vec<_>>());
        for steps in 1..=50 {
            let idx = uniform_step_indices(50, steps).unwrap();
            assert_eq!(idx[0], 50);
            assert_eq!(*idx.last().unwrap(), 0);
            assert!(idx.windows(2).all(|w| w[0] > w[1]));
        }
        assert!(uniform_step_indices(10, 0).is_err());
        assert!(uniform_step_indices(10, 11).is_err());
    }

    #[test]
    fn gradient_sampler_rejects_other_kinds() {
        let s = Schedule::trig(10).unwrap();
        let den = crate::ExactPair {
            x0: Batch::zeros((1, 1)),
            eps: Batch::zeros((1, 1)),
        };
        let cfg = SamplerConfig::new(SamplerKind::Ddim, 5, 0);
        assert!(sample_gradient(&den, &cfg, &s, Batch::zeros((1, 1))).is_err());
    }

    #[test]
    fn initial_noise_rows_are_chain_streams() {
        let a = initial_noise(4, 3, 99);
        let b = initial_noise(8, 3, 99);
        assert_eq!(a, b.slice(ndarray::s![..4, ..]));
    }
}
