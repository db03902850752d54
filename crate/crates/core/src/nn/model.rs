use std::f64::consts::FRAC_PI_2;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::autodiff::{silu, Tape, Var};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::Batch;

/// Rows per parallel work item during inference.
const INFERENCE_CHUNK: usize = 256;

/// η ∈ [0, π/2] is stretched onto [0, 1000] before the sinusoidal embedding.
const EMBED_SCALE: f64 = 1000.0 / FRAC_PI_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub time_embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256, 256, 256],
            time_embed_dim: 64,
        }
    }
}

/// One trainable tensor. Biases are kept as `1 × n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub is_bias: bool,
}

/// Round to the nearest f32. Parameters always hold f32-representable values
/// so checkpoints (stored as f32) round-trip exactly.
pub(crate) fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// Sinusoidal embedding of per-row angles: `[sin(τ·f_k)..., cos(τ·f_k)...]`
/// with τ = η·1000/(π/2) and f_k = 10000^(−k/(dim/2)).
pub fn time_embedding(etas: &[f64], dim: usize) -> Array2<f64> {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|k| (-(10000f64).ln() * k as f64 / half as f64).exp())
        .collect();
    let mut out = Array2::zeros((etas.len(), dim));
    for (mut row, &eta) in out.rows_mut().into_iter().zip(etas) {
        let tau = eta * EMBED_SCALE;
        for (k, f) in freqs.iter().enumerate() {
            row[k] = (tau * f).sin();
            row[half + k] = (tau * f).cos();
        }
    }
    out
}

/// Two-headed MLP mapping (x_t, η) to (x̂0, ε̂).
///
/// Input is `concat(x_t, embed(η))`; hidden layers use SiLU; both heads are
/// linear. Weight matrices are stored `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    dim: usize,
    time_embed_dim: usize,
    hidden_dims: Vec<usize>,
    params: Vec<Param>,
}

pub(crate) struct Recorded {
    pub params: Vec<Var>,
    pub x0: Var,
    pub eps: Var,
}

impl DenoiserModel {
    /// Fresh model: Glorot-uniform hidden weights, zero biases, zero heads.
    pub fn new(dim: usize, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("data dim must be >= 1".into()));
        }
        if cfg.time_embed_dim == 0 || !cfg.time_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "time_embed_dim must be a positive even number, got {}",
                cfg.time_embed_dim
            )));
        }
        if cfg.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be >= 1".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut params = Vec::new();
        let mut fan_in = dim + cfg.time_embed_dim;
        for (l, &width) in cfg.hidden_dims.iter().enumerate() {
            let a = (6.0 / (fan_in + width) as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, width), || {
                to_f32_precision(a * (2.0 * rng.uniform() - 1.0))
            });
            params.push(Param {
                name: format!("hidden.{l}.weight"),
                value: w,
                is_bias: false,
            });
            params.push(Param {
                name: format!("hidden.{l}.bias"),
                value: Array2::zeros((1, width)),
                is_bias: true,
            });
            fan_in = width;
        }
        for head in ["head_x0", "head_eps"] {
            params.push(Param {
                name: format!("{head}.weight"),
                value: Array2::zeros((fan_in, dim)),
                is_bias: false,
            });
            params.push(Param {
                name: format!("{head}.bias"),
                value: Array2::zeros((1, dim)),
                is_bias: true,
            });
        }
        Ok(Self {
            dim,
            time_embed_dim: cfg.time_embed_dim,
            hidden_dims: cfg.hidden_dims.clone(),
            params,
        })
    }

    /// Rebuild a model from named tensors in canonical order, validating shapes.
    pub fn from_params(params: Vec<Param>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if params.len() < 4 || !params.len().is_multiple_of(2) {
            return bad(format!("expected an even number >= 4 of tensors, got {}", params.len()));
        }
        let n_hidden = params.len() / 2 - 2;
        let mut names = Vec::new();
        for l in 0..n_hidden {
            names.push(format!("hidden.{l}.weight"));
            names.push(format!("hidden.{l}.bias"));
        }
        for head in ["head_x0", "head_eps"] {
            names.push(format!("{head}.weight"));
            names.push(format!("{head}.bias"));
        }
        for (p, n) in params.iter().zip(&names) {
            if &p.name != n {
                return bad(format!("expected tensor `{n}`, found `{}`", p.name));
            }
            if p.is_bias != n.ends_with(".bias") || (p.is_bias && p.value.nrows() != 1) {
                return bad(format!("tensor `{n}` has the wrong rank"));
            }
        }
        let dim = params[params.len() - 1].value.ncols();
        let input = params[0].value.nrows();
        if input <= dim {
            return bad(format!("input width {input} leaves no room for a time embedding"));
        }
        let time_embed_dim = input - dim;
        if !time_embed_dim.is_multiple_of(2) {
            return bad(format!("time embedding width {time_embed_dim} is odd"));
        }
        let mut fan_in = input;
        let mut hidden_dims = Vec::new();
        for pair in params.chunks(2) {
            let (w, b) = (&pair[0].value, &pair[1].value);
            if w.nrows() != fan_in || b.ncols() != w.ncols() {
                return bad(format!("tensor `{}` has inconsistent shape {:?}", pair[0].name, w.dim()));
            }
            if hidden_dims.len() < n_hidden {
                hidden_dims.push(w.ncols());
                fan_in = w.ncols();
            } else if w.ncols() != dim {
                return bad(format!("head `{}` outputs {} not {dim}", pair[0].name, w.ncols()));
            }
        }
        Ok(Self {
            dim,
            time_embed_dim,
            hidden_dims,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// θ as one flat vector, tensor by tensor in row-major order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    /// Overwrite θ from a flat vector (values are used as given).
    pub fn set_flat_parameters(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_parameters() {
            return Err(Error::Shape(format!(
                "flat parameter length {} vs {}",
                theta.len(),
                self.num_parameters()
            )));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.iter_mut().zip(&theta[off..off + n]).for_each(|(d, s)| *d = *s);
            off += n;
        }
        Ok(())
    }

    /// Fail with the offending tensor's name if any parameter is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if !p.value.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteParameter(p.name.clone()));
            }
        }
        Ok(())
    }

    pub(crate) fn input(&self, x: ArrayView2<f64>, etas: &[f64]) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::Shape(format!(
                "model expects dim {}, got {}",
                self.dim,
                x.ncols()
            )));
        }
        if etas.len() != x.nrows() {
            return Err(Error::Shape(format!(
                "{} angles for {} rows",
                etas.len(),
                x.nrows()
            )));
        }
        let emb = time_embedding(etas, self.time_embed_dim);
        concatenate(Axis(1), &[x, emb.view()]).map_err(|e| Error::Shape(e.to_string()))
    }

    fn forward_input(&self, input: Array2<f64>) -> (Batch, Batch) {
        let n_hidden = self.hidden_dims.len();
        let mut h = input;
        for l in 0..n_hidden {
            let (w, b) = (&self.params[2 * l].value, &self.params[2 * l + 1].value);
            let mut z = h.dot(w);
            z += b;
            z.mapv_inplace(silu);
            h = z;
        }
        let head = |i: usize| {
            let mut o = h.dot(&self.params[i].value);
            o += &self.params[i + 1].value;
            o
        };
        (head(2 * n_hidden), head(2 * n_hidden + 2))
    }

    /// (x̂0, ε̂) for a batch with one angle per row.
    pub fn forward_etas(&self, x: ArrayView2<f64>, etas: &[f64]) -> Result<(Batch, Batch)> {
        self.check_finite()?;
        let input = self.input(x, etas)?;
        Ok(self.forward_input(input))
    }

    /// (x̂0, ε̂) with every row at the same angle.
    pub fn forward(&self, x: ArrayView2<f64>, eta: f64) -> Result<(Batch, Batch)> {
        self.forward_etas(x, &vec![eta; x.nrows()])
    }

    /// Record the forward pass for `input` on `tape`.
    pub(crate) fn record(&self, tape: &mut Tape, input: Array2<f64>) -> Result<Recorded> {
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let n_hidden = self.hidden_dims.len();
        let mut h = tape.leaf(input);
        for l in 0..n_hidden {
            let z = tape.matmul(h, params[2 * l])?;
            let z = tape.add_row(z, params[2 * l + 1])?;
            h = tape.silu(z);
        }
        let mut head = |i: usize| -> Result<Var> {
            let o = tape.matmul(h, params[i])?;
            tape.add_row(o, params[i + 1])
        };
        let x0 = head(2 * n_hidden)?;
        let eps = head(2 * n_hidden + 2)?;
        Ok(Recorded { params, x0, eps })
    }
}

impl Denoiser for DenoiserModel {
    fn denoise(&self, x: ArrayView2<f64>, eta: f64) -> Result<(Batch, Batch)> {
        self.check_finite()?;
        if x.ncols() != self.dim {
            return Err(Error::Shape(format!(
                "model expects dim {}, got {}",
                self.dim,
                x.ncols()
            )));
        }
        let n = x.nrows();
        let parts: Vec<(Batch, Batch)> = (0..n.div_ceil(INFERENCE_CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * INFERENCE_CHUNK;
                let hi = (lo + INFERENCE_CHUNK).min(n);
                let chunk = x.slice(s![lo..hi, ..]);
                let input = self.input(chunk, &vec![eta; hi - lo])?;
                Ok(self.forward_input(input))
            })
            .collect::<Result<_>>()?;
        let mut x0 = Batch::zeros((n, self.dim));
        let mut eps = Batch::zeros((n, self.dim));
        for (c, (a, b)) in parts.into_iter().enumerate() {
            let lo = c * INFERENCE_CHUNK;
            let hi = lo + a.nrows();
            x0.slice_mut(s![lo..hi, ..]).assign(&a);
            eps.slice_mut(s![lo..hi, ..]).assign(&b);
        }
        Ok((x0, eps))
    }
}
