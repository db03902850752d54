//! Central finite-difference check of tape gradients.

use ndarray::ArrayView2;

use super::loss::{loss_graph, LossNorm, LossWeights};
use super::model::DenoiserModel;
use crate::error::Result;
use crate::schedules::Schedule;

/// Gradients smaller than this in both estimates are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Name and flat index (within the tensor) of the worst parameter.
    pub worst: (String, usize),
    pub n_params: usize,
}

/// Compare autodiff gradients with (f(θ+h) − f(θ−h))/2h on every parameter.
///
/// The relative error is |g_ad − g_fd| / max(|g_ad|, |g_fd|, [`GRADCHECK_FLOOR`]).
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    model: &DenoiserModel,
    x0: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    ts: &[usize],
    sched: &Schedule,
    weights: LossWeights,
    norm: LossNorm,
    h: f64,
) -> Result<GradCheck> {
    let analytic = loss_graph(model, x0, eps, ts, sched, weights, norm)?
        .backward()?
        .flat();
    let theta = model.flat_parameters();
    let mut probe = model.clone();
    let mut eval = |theta: &[f64]| -> Result<f64> {
        probe.set_flat_parameters(theta)?;
        Ok(loss_graph(&probe, x0, eps, ts, sched, weights, norm)?.report.total)
    };
    let mut worst = (0.0, 0);
    let mut shifted = theta.clone();
    for i in 0..theta.len() {
        shifted[i] = theta[i] + h;
        let up = eval(&shifted)?;
        shifted[i] = theta[i] - h;
        let down = eval(&shifted)?;
        shifted[i] = theta[i];
        let fd = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRADCHECK_FLOOR);
        if rel > worst.0 || i == 0 {
            worst = (rel, i);
        }
    }
    let mut offset = 0;
    let mut name = (String::new(), 0);
    for p in model.params() {
        if worst.1 < offset + p.value.len() {
            name = (p.name.clone(), worst.1 - offset);
            break;
        }
        offset += p.value.len();
    }
    Ok(GradCheck {
        max_rel_error: worst.0,
        worst: name,
        n_params: theta.len(),
    })
}
