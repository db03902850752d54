//! Single-threaded, deterministic training loop.

use std::io::Write;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::loss::{loss_graph, LossNorm, LossWeights, DEFAULT_GAMMA};
use super::model::DenoiserModel;
use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::schedules::Schedule;

/// Total loss above which training is aborted.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub seed: u64,
    pub norm: LossNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 256,
            lr: 1e-3,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            norm: LossNorm::L2,
        }
    }
}

/// Loss terms recorded after one optimizer step's forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub step: usize,
    pub image_loss: f64,
    pub noise_loss: f64,
    pub gradient_loss: f64,
    pub total: f64,
}

pub fn write_loss_csv<W: Write>(records: &[RunRecord], mut w: W) -> Result<()> {
    writeln!(w, "step,image_loss,noise_loss,gradient_loss,total")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.step,
            crate::fmt_f64(r.image_loss),
            crate::fmt_f64(r.noise_loss),
            crate::fmt_f64(r.gradient_loss),
            crate::fmt_f64(r.total)
        )?;
    }
    Ok(())
}

/// Train on minibatches drawn with replacement from `data`.
///
/// Each example gets its own t ~ Uniform{1, …, T} and ε ~ N(0, I).
pub fn train(
    model: &mut DenoiserModel,
    data: ArrayView2<f64>,
    sched: &Schedule,
    cfg: &TrainConfig,
) -> Result<Vec<RunRecord>> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    if data.nrows() == 0 || data.ncols() != model.dim() {
        return Err(Error::Shape(format!(
            "training data {:?} for model dim {}",
            data.dim(),
            model.dim()
        )));
    }
    if cfg.gamma < 0.0 || cfg.lr < 0.0 {
        return Err(Error::InvalidArgument("gamma and lr must be >= 0".into()));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut opt = Adam::new(
        model,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let total_steps = sched.steps();
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.below(data.nrows())).collect();
        let ts: Vec<usize> = (0..cfg.batch_size).map(|_| 1 + rng.below(total_steps)).collect();
        let x0 = data.select(Axis(0), &idx);
        let eps = rng.normal_array(cfg.batch_size, model.dim());
        let graph = loss_graph(
            model,
            x0.view(),
            eps.view(),
            &ts,
            sched,
            LossWeights::joint(cfg.gamma),
            cfg.norm,
        )?;
        let r = graph.report;
        if !r.total.is_finite() || r.total > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { step, loss: r.total });
        }
        let grads = graph.backward()?;
        opt.step(model, &grads)?;
        records.push(RunRecord {
            step,
            image_loss: r.image_loss,
            noise_loss: r.noise_loss,
            gradient_loss: r.gradient_loss,
            total: r.total,
        });
    }
    Ok(records)
}
