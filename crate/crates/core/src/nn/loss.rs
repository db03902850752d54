//! Joint image/noise/velocity objective.
//!
//! total = w_img·d(x̂0, x0) + w_noise·d(ε̂, ε) + γ·d(v̂, v), where
//! v = −sin η·x0 + cos η·ε and v̂ is the same expression on the estimates.
//! `d` is the per-element mean of squared (L2) or absolute (L1) differences.

use ndarray::{Array1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Var};
use super::model::{DenoiserModel, Recorded};
use crate::error::{check_same_shape, Error, Result};
use crate::schedules::Schedule;
use crate::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNorm {
    #[default]
    L2,
    L1,
}

pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub image: f64,
    pub noise: f64,
    pub gradient: f64,
}

impl LossWeights {
    pub fn joint(gamma: f64) -> Self {
        Self {
            image: 1.0,
            noise: 1.0,
            gradient: gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub image_loss: f64,
    pub noise_loss: f64,
    pub gradient_loss: f64,
    pub total: f64,
    pub gamma: f64,
}

/// Per-row arc coefficients (cos η_t, sin η_t) from the schedule tables.
fn row_coefficients(ts: &[usize], sched: &Schedule) -> Result<(Array1<f64>, Array1<f64>)> {
    let c = ts.iter().map(|&t| sched.signal(t)).collect::<Result<Array1<f64>>>()?;
    let s = ts.iter().map(|&t| sched.noise(t)).collect::<Result<Array1<f64>>>()?;
    Ok((c, s))
}

fn row_velocity(a: ArrayView2<f64>, b: ArrayView2<f64>, c: &Array1<f64>, s: &Array1<f64>) -> Batch {
    let mut v = Batch::zeros(a.raw_dim());
    for (i, mut row) in v.rows_mut().into_iter().enumerate() {
        Zip::from(&mut row)
            .and(a.row(i))
            .and(b.row(i))
            .for_each(|o, &p, &q| *o = -s[i] * p + c[i] * q);
    }
    v
}

fn distance(a: ArrayView2<f64>, b: ArrayView2<f64>, norm: LossNorm) -> f64 {
    let n = a.len() as f64;
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| match norm {
            LossNorm::L2 => (p - q).powi(2),
            LossNorm::L1 => (p - q).abs(),
        })
        .sum();
    sum / n
}

fn check_inputs(x0: &ArrayView2<f64>, eps: &ArrayView2<f64>, ts: &[usize]) -> Result<()> {
    check_same_shape("loss", x0, eps)?;
    if ts.len() != x0.nrows() {
        return Err(Error::Shape(format!("{} steps for {} rows", ts.len(), x0.nrows())));
    }
    if x0.nrows() == 0 {
        return Err(Error::InvalidArgument("loss needs a non-empty batch".into()));
    }
    Ok(())
}

impl LossReport {
    /// Loss terms for given predictions, computed directly (no tape).
    #[allow(clippy::too_many_arguments)]
    pub fn from_predictions(
        x0_hat: ArrayView2<f64>,
        eps_hat: ArrayView2<f64>,
        x0: ArrayView2<f64>,
        eps: ArrayView2<f64>,
        ts: &[usize],
        sched: &Schedule,
        gamma: f64,
        norm: LossNorm,
    ) -> Result<Self> {
        check_inputs(&x0, &eps, ts)?;
        check_same_shape("loss", &x0_hat, &x0)?;
        check_same_shape("loss", &eps_hat, &eps)?;
        let (c, s) = row_coefficients(ts, sched)?;
        let v = row_velocity(x0, eps, &c, &s);
        let v_hat = row_velocity(x0_hat, eps_hat, &c, &s);
        let image_loss = distance(x0_hat, x0, norm);
        let noise_loss = distance(eps_hat, eps, norm);
        let gradient_loss = distance(v_hat.view(), v.view(), norm);
        Ok(Self {
            image_loss,
            noise_loss,
            gradient_loss,
            total: image_loss + noise_loss + gamma * gradient_loss,
            gamma,
        })
    }
}

/// A recorded loss evaluation ready for differentiation.
pub struct LossGraph {
    tape: Tape,
    recorded: Recorded,
    total: Var,
    shapes: Vec<(usize, usize)>,
    pub report: LossReport,
}

/// ∂total/∂θ, one array per parameter tensor in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(pub Vec<Batch>);

impl ParamGrads {
    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|g| g.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

impl LossGraph {
    pub fn backward(&self) -> Result<ParamGrads> {
        let g = self.tape.backward(self.total)?;
        Ok(ParamGrads(
            self.recorded
                .params
                .iter()
                .zip(&self.shapes)
                .map(|(&p, &shape)| g.get_or_zeros(p, shape))
                .collect(),
        ))
    }
}

/// Build the loss on a batch of clean data `x0`, noise `eps` and per-row steps `ts`.
#[allow(clippy::too_many_arguments)]
pub fn loss_graph(
    model: &DenoiserModel,
    x0: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    ts: &[usize],
    sched: &Schedule,
    weights: LossWeights,
    norm: LossNorm,
) -> Result<LossGraph> {
    check_inputs(&x0, &eps, ts)?;
    if weights.gradient < 0.0 || weights.image < 0.0 || weights.noise < 0.0 {
        return Err(Error::InvalidArgument("loss weights must be >= 0".into()));
    }
    model.check_finite()?;
    let (c, s) = row_coefficients(ts, sched)?;
    let mut xt = Batch::zeros(x0.raw_dim());
    for (i, mut row) in xt.rows_mut().into_iter().enumerate() {
        Zip::from(&mut row)
            .and(x0.row(i))
            .and(eps.row(i))
            .for_each(|o, &a, &b| *o = c[i] * a + s[i] * b);
    }
    let etas: Vec<f64> = ts.iter().map(|&t| sched.eta(t)).collect::<Result<_>>()?;
    let input = model.input(xt.view(), &etas)?;

    let mut tape = Tape::new();
    let rec = model.record(&mut tape, input)?;
    let x0_leaf = tape.leaf(x0.to_owned());
    let eps_leaf = tape.leaf(eps.to_owned());
    let v_leaf = tape.leaf(row_velocity(x0, eps, &c, &s));

    let reduce = |tape: &mut Tape, r: Var| match norm {
        LossNorm::L2 => tape.mean_square(r),
        LossNorm::L1 => tape.mean_abs(r),
    };
    let r_img = tape.sub(rec.x0, x0_leaf)?;
    let img = reduce(&mut tape, r_img);
    let r_noise = tape.sub(rec.eps, eps_leaf)?;
    let noise = reduce(&mut tape, r_noise);
    let a = tape.scale_rows(rec.x0, -&s)?;
    let b = tape.scale_rows(rec.eps, c)?;
    let v_hat = tape.add(a, b)?;
    let r_grad = tape.sub(v_hat, v_leaf)?;
    let grad = reduce(&mut tape, r_grad);

    let wi = tape.scale(img, weights.image);
    let wn = tape.scale(noise, weights.noise);
    let wg = tape.scale(grad, weights.gradient);
    let partial = tape.add(wi, wn)?;
    let total = tape.add(partial, wg)?;

    let report = LossReport {
        image_loss: tape.scalar(img),
        noise_loss: tape.scalar(noise),
        gradient_loss: tape.scalar(grad),
        total: tape.scalar(total),
        gamma: weights.gradient,
    };
    let shapes = model.params().iter().map(|p| p.value.dim()).collect();
    Ok(LossGraph {
        tape,
        recorded: rec,
        total,
        shapes,
        report,
    })
}

/// Joint loss with squared-error terms and gradient weight `gamma`.
pub fn loss(
    model: &DenoiserModel,
    x0: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    ts: &[usize],
    sched: &Schedule,
    gamma: f64,
) -> Result<LossReport> {
    if gamma < 0.0 {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(loss_graph(model, x0, eps, ts, sched, LossWeights::joint(gamma), LossNorm::L2)?.report)
}
