//! The denoiser capability shared by samplers and metrics.

use std::f64::consts::FRAC_PI_2;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::oracle::GaussianMixture;
use crate::schedules::Schedule;
use crate::Batch;

/// Anything that estimates (x̂0, ε̂) from a noisy batch at arc angle η.
///
/// Implementations are conditioned on a continuous η ∈ [0, π/2] so that
/// intermediate Runge-Kutta stages can be evaluated between grid points.
pub trait Denoiser: Sync {
    fn denoise(&self, x: ArrayView2<f64>, eta: f64) -> Result<(Batch, Batch)>;

    /// Convenience wrapper evaluating at the angle of grid step `t`.
    fn denoise_step(&self, x: ArrayView2<f64>, t: usize, sched: &Schedule) -> Result<(Batch, Batch)> {
        self.denoise(x, sched.eta(t)?)
    }
}

/// (cos η, sin η) with exact values at both ends of the arc.
pub fn arc_coefficients(eta: f64) -> (f64, f64) {
    if eta == 0.0 {
        (1.0, 0.0)
    } else if eta == FRAC_PI_2 {
        (0.0, 1.0)
    } else {
        (eta.cos(), eta.sin())
    }
}

/// Bayes-optimal denoiser for Gaussian-mixture data.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    pub mixture: GaussianMixture,
}

impl OracleDenoiser {
    pub fn new(mixture: GaussianMixture) -> Self {
        Self { mixture }
    }
}

impl Denoiser for OracleDenoiser {
    fn denoise(&self, x: ArrayView2<f64>, eta: f64) -> Result<(Batch, Batch)> {
        let (c, s) = arc_coefficients(eta);
        self.mixture.posterior(x, c, s)
    }
}

/// Returns a fixed (x0, ε) pair regardless of input: the perfect estimate
/// for one known trajectory.
#[derive(Debug, Clone)]
pub struct ExactPair {
    pub x0: Batch,
    pub eps: Batch,
}

impl Denoiser for ExactPair {
    fn denoise(&self, x: ArrayView2<f64>, _eta: f64) -> Result<(Batch, Batch)> {
        if x.dim() != self.x0.dim() {
            return Err(Error::Shape(format!(
                "exact pair holds {:?}, got {:?}",
                self.x0.dim(),
                x.dim()
            )));
        }
        Ok((self.x0.clone(), self.eps.clone()))
    }
}
