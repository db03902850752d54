//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::loss::ParamGrads;
use super::model::{to_f32_precision, DenoiserModel};
use crate::error::{Error, Result};
use crate::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Batch>,
    v: Vec<Batch>,
    t: i32,
}

impl Adam {
    pub fn new(model: &DenoiserModel, cfg: AdamConfig) -> Self {
        let zeros: Vec<Batch> = model.params().iter().map(|p| Batch::zeros(p.value.raw_dim())).collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// Apply one update; parameters are rounded back to f32 precision.
    pub fn step(&mut self, model: &mut DenoiserModel, grads: &ParamGrads) -> Result<()> {
        if grads.0.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameter tensors",
                grads.0.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        for (((p, g), m), v) in model
            .params_mut()
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if g.dim() != p.value.dim() {
                return Err(Error::Shape(format!("gradient shape for `{}`", p.name)));
            }
            ndarray::Zip::from(&mut p.value)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let step = lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *w = to_f32_precision(*w - step);
                });
        }
        Ok(())
    }
}
