//! Desk-scale diffusion laboratory.
//!
//! Diffusion on a quarter circle: x_t = cos(η_t)·x0 + sin(η_t)·ε, a two-headed
//! denoiser that estimates x0 and ε jointly, and samplers that integrate the
//! bounded velocity field dx/dη with Euler, RK2 or RK4. Gaussian-mixture data
//! gives a closed-form Bayes denoiser for checking samplers without training.

// NaN must fail range checks, so these are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod samplers;
pub mod schedules;
pub mod tensor_io;

pub use denoiser::{Denoiser, ExactPair, OracleDenoiser};
pub use error::{Error, Result};
pub use schedules::{JsdConvention, Schedule, ScheduleFamily};

/// A batch of row vectors, `batch_size × dim`.
pub type Batch = ndarray::Array2<f64>;

/// Format a float with 17 significant digits for CSV output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
