//! Forward diffusion, velocity fields and the two inversion identities.
//!
//! The integration variable is the arc angle η, so the velocity of the
//! trigonometric path is dx/dη = −sin(η)·x0 + cos(η)·ε with no extra
//! time-derivative factor. Inversions refuse the endpoint where their
//! denominator vanishes.

use ndarray::{ArrayView2, Zip};

use crate::error::{check_same_shape, Error, Result};
use crate::schedules::Schedule;
use crate::Batch;

/// Time derivative of a diffusion path with respect to η.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity(pub Batch);

impl Velocity {
    pub fn into_inner(self) -> Batch {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// `a·x + b·y`, elementwise.
pub(crate) fn combine(a: f64, x: ArrayView2<f64>, b: f64, y: ArrayView2<f64>) -> Batch {
    Zip::from(&x).and(&y).map_collect(|&x, &y| a * x + b * y)
}

/// x_t = cos(η)·x0 + sin(η)·ε at a continuous angle.
pub fn diffuse_at_eta(x0: ArrayView2<f64>, eps: ArrayView2<f64>, eta: f64) -> Result<Batch> {
    check_same_shape("diffuse", &x0, &eps)?;
    Ok(combine(eta.cos(), x0, eta.sin(), eps))
}

/// x_t = cos(η_t)·x0 + sin(η_t)·ε.
pub fn diffuse_trig(
    x0: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Batch> {
    check_same_shape("diffuse_trig", &x0, &eps)?;
    Ok(combine(sched.signal(t)?, x0, sched.noise(t)?, eps))
}

/// x = √ᾱ·x0 + √(1 − ᾱ)·ε for a continuous ᾱ ∈ [0, 1].
pub fn diffuse_sqrt_at(x0: ArrayView2<f64>, eps: ArrayView2<f64>, alpha_bar: f64) -> Result<Batch> {
    check_same_shape("diffuse_sqrt", &x0, &eps)?;
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidArgument(format!(
            "alpha_bar {alpha_bar} outside [0, 1]"
        )));
    }
    Ok(combine(alpha_bar.sqrt(), x0, (1.0 - alpha_bar).sqrt(), eps))
}

/// x_t = √ᾱ_t·x0 + √(1 − ᾱ_t)·ε.
pub fn diffuse_sqrt(
    x0: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Batch> {
    diffuse_sqrt_at(x0, eps, sched.alpha_bar(t)?)
}

/// −sin(η)·a + cos(η)·b.
pub fn velocity_at_eta(a: ArrayView2<f64>, b: ArrayView2<f64>, eta: f64) -> Result<Velocity> {
    check_same_shape("velocity", &a, &b)?;
    Ok(Velocity(combine(-eta.sin(), a, eta.cos(), b)))
}

fn velocity_at_step(a: ArrayView2<f64>, b: ArrayView2<f64>, t: usize, sched: &Schedule) -> Result<Velocity> {
    check_same_shape("velocity", &a, &b)?;
    Ok(Velocity(combine(-sched.noise(t)?, a, sched.signal(t)?, b)))
}

/// Ground-truth velocity of the path through (x0, ε) at step t.
pub fn true_velocity(
    x0: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Velocity> {
    velocity_at_step(x0, eps, t, sched)
}

/// Velocity implied by estimated (x̂0, ε̂) at step t.
pub fn estimated_velocity(
    x0_hat: ArrayView2<f64>,
    eps_hat: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Velocity> {
    velocity_at_step(x0_hat, eps_hat, t, sched)
}

/// ε̂ = (x_t − cos(η_t)·x̂0)/sin(η_t). Singular at t = 0.
pub fn invert_to_eps(
    x_t: ArrayView2<f64>,
    x0_hat: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Batch> {
    check_same_shape("invert_to_eps", &x_t, &x0_hat)?;
    let (c, s) = (sched.signal(t)?, sched.noise(t)?);
    if t == 0 || s == 0.0 {
        return Err(Error::SingularInversion { op: "invert_to_eps", t });
    }
    Ok(Zip::from(&x_t)
        .and(&x0_hat)
        .map_collect(|&x, &x0| (x - c * x0) / s))
}

/// x̂0 = (x_t − sin(η_t)·ε̂)/cos(η_t). Singular at t = T.
pub fn invert_to_x0(
    x_t: ArrayView2<f64>,
    eps_hat: ArrayView2<f64>,
    t: usize,
    sched: &Schedule,
) -> Result<Batch> {
    check_same_shape("invert_to_x0", &x_t, &eps_hat)?;
    let (c, s) = (sched.signal(t)?, sched.noise(t)?);
    if t == sched.steps() || c == 0.0 {
        return Err(Error::SingularInversion { op: "invert_to_x0", t });
    }
    Ok(Zip::from(&x_t)
        .and(&eps_hat)
        .map_collect(|&x, &e| (x - s * e) / c))
}
