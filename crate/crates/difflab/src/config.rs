//! Strict JSON experiment configuration.
//!
//! Every field has a default, so `{}` is a complete config. Unknown keys are
//! rejected at every level.

use std::path::{Path, PathBuf};

use difflab_core::datasets::{analytic_mixture, DatasetKind, DatasetSpec, Normalization};
use difflab_core::nn::{LossNorm, ModelConfig, TrainConfig};
use difflab_core::oracle::GaussianMixture;
use difflab_core::rng::derive_seed;
use difflab_core::samplers::SamplerKind;
use difflab_core::schedules::{LINEAR_BETA_MAX, LINEAR_BETA_MIN};
use difflab_core::{JsdConvention, Schedule, ScheduleFamily};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, HarnessResult};

/// Stream identifiers for seeds derived from the root seed.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const SAMPLER: u64 = 4;
    pub const REFERENCE: u64 = 5;
    pub const RECON: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const CONVERGENCE: u64 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Trig,
    Linear,
    Jsd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub family: FamilyName,
    /// Number of diffusion steps T.
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub jsd_convention: JsdConvention,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            family: FamilyName::Trig,
            steps: 1000,
            beta_min: LINEAR_BETA_MIN,
            beta_max: LINEAR_BETA_MAX,
            jsd_convention: JsdConvention::AsWritten,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    pub time_embed_dim: usize,
    pub gamma: f64,
    pub lr: f64,
    pub train_steps: usize,
    pub batch: usize,
    pub loss_norm: LossNorm,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Self {
            hidden_dims: m.hidden_dims,
            time_embed_dim: m.time_embed_dim,
            gamma: t.gamma,
            lr: t.lr,
            train_steps: t.steps,
            batch: t.batch_size,
            loss_norm: t.norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub kind: SamplerKind,
    pub steps: usize,
    /// Replicate ids; each yields its own seed derived from the root seed.
    pub seeds: Vec<u64>,
    pub chains: usize,
    pub record_trajectory: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            kind: SamplerKind::GradRk4,
            steps: 50,
            seeds: vec![0],
            chains: 10_000,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    GaussianRing,
    SwissRoll,
    Checkerboard,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub kind: DatasetName,
    /// Required when `kind` is `mixture`, rejected otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<GaussianMixture>,
    pub n: usize,
    pub normalization: Normalization,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            kind: DatasetName::GaussianRing,
            mixture: None,
            n: 50_000,
            normalization: Normalization::Standardize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_projections: usize,
    /// RBF bandwidth; `null` selects the median heuristic.
    pub bandwidth: Option<f64>,
    /// Size of the generated reference set when no reference file is given.
    pub reference_n: usize,
    /// At most this many rows of each set enter the MMD estimate.
    pub mmd_max_points: usize,
    /// Sampler kinds and step counts for the sweep run when no samples are given.
    pub sweep_samplers: Vec<SamplerKind>,
    pub sweep_steps: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_projections: 256,
            bandwidth: None,
            reference_n: 100_000,
            mmd_max_points: 2000,
            sweep_samplers: vec![
                SamplerKind::DdpmAncestral,
                SamplerKind::GradEuler,
                SamplerKind::GradRk4,
            ],
            sweep_steps: vec![10, 50],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconSection {
    pub n_per_t: usize,
    /// Steps to evaluate; `null` means every `stride`-th step in 1..T−1 plus T−1.
    pub t_grid: Option<Vec<usize>>,
    pub stride: usize,
}

impl Default for ReconSection {
    fn default() -> Self {
        Self {
            n_per_t: 2000,
            t_grid: None,
            stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub step_counts: Vec<usize>,
    pub reference_steps: usize,
    pub chains: usize,
    /// Oracle distribution; `null` uses the dataset's mixture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<GaussianMixture>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            step_counts: vec![25, 50, 100, 200, 400],
            reference_steps: 4096,
            chains: 64,
            mixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub schedule: ScheduleSection,
    pub model: ModelSection,
    pub sampler: SamplerSection,
    pub dataset: DatasetSection,
    pub eval: EvalSection,
    pub recon: ReconSection,
    pub convergence: ConvergenceSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            schedule: ScheduleSection::default(),
            model: ModelSection::default(),
            sampler: SamplerSection::default(),
            dataset: DatasetSection::default(),
            eval: EvalSection::default(),
            recon: ReconSection::default(),
            convergence: ConvergenceSection::default(),
        }
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("`{key}`: {msg}"))
}

impl ExperimentConfig {
    /// Parse and validate JSON text. `origin` names the source in diagnostics.
    pub fn from_json(text: &str, origin: &str) -> HarnessResult<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            // serde's message already carries "at line L column C"
            HarnessError::Config(format!("{origin}: {e}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let s = &self.schedule;
        if s.steps == 0 {
            return Err(invalid("schedule.steps", "must be >= 1"));
        }
        if s.family == FamilyName::Linear
            && !(0.0 < s.beta_min && s.beta_min <= s.beta_max && s.beta_max < 1.0)
        {
            return Err(invalid(
                "schedule.beta_min",
                "need 0 < beta_min <= beta_max < 1",
            ));
        }
        let m = &self.model;
        if m.hidden_dims.is_empty() || m.hidden_dims.contains(&0) {
            return Err(invalid("model.hidden_dims", "need at least one positive width"));
        }
        if m.time_embed_dim == 0 || !m.time_embed_dim.is_multiple_of(2) {
            return Err(invalid("model.time_embed_dim", "must be positive and even"));
        }
        if !(m.gamma >= 0.0) {
            return Err(invalid("model.gamma", "must be >= 0"));
        }
        if !(m.lr >= 0.0) {
            return Err(invalid("model.lr", "must be >= 0"));
        }
        if m.batch == 0 {
            return Err(invalid("model.batch", "must be >= 1"));
        }
        let sm = &self.sampler;
        if sm.steps == 0 {
            return Err(invalid("sampler.steps", "must be >= 1"));
        }
        if sm.chains == 0 {
            return Err(invalid("sampler.chains", "must be >= 1"));
        }
        if sm.seeds.is_empty() {
            return Err(invalid("sampler.seeds", "need at least one replicate"));
        }
        let d = &self.dataset;
        if d.n == 0 {
            return Err(invalid("dataset.n", "must be >= 1"));
        }
        match (d.kind, &d.mixture) {
            (DatasetName::Mixture, None) => {
                return Err(invalid("dataset.mixture", "required when kind is \"mixture\""))
            }
            (k, Some(_)) if k != DatasetName::Mixture => {
                return Err(invalid("dataset.mixture", "only allowed when kind is \"mixture\""))
            }
            _ => {}
        }
        let e = &self.eval;
        if e.n_projections == 0 {
            return Err(invalid("eval.n_projections", "must be >= 1"));
        }
        if let Some(h) = e.bandwidth {
            if !(h > 0.0) {
                return Err(invalid("eval.bandwidth", "must be > 0"));
            }
        }
        if e.reference_n == 0 || e.mmd_max_points == 0 {
            return Err(invalid("eval.reference_n", "counts must be >= 1"));
        }
        if e.sweep_steps.contains(&0) {
            return Err(invalid("eval.sweep_steps", "each must be >= 1"));
        }
        let r = &self.recon;
        if r.n_per_t == 0 {
            return Err(invalid("recon.n_per_t", "must be >= 1"));
        }
        if r.stride == 0 {
            return Err(invalid("recon.stride", "must be >= 1"));
        }
        let c = &self.convergence;
        if c.step_counts.len() < 2 || c.step_counts.contains(&0) {
            return Err(invalid("convergence.step_counts", "need at least two positive counts"));
        }
        if c.reference_steps == 0 || c.chains == 0 {
            return Err(invalid("convergence.reference_steps", "counts must be >= 1"));
        }
        Ok(())
    }

    /// Step counts that depend on T are checked only by the commands that use them.
    pub fn check_sampler_steps(&self, key: &str, steps: &[usize]) -> HarnessResult<()> {
        let total = self.schedule.steps;
        if let Some(bad) = steps.iter().find(|&&k| k > total) {
            return Err(invalid(key, format!("{bad} exceeds the {total} diffusion steps")));
        }
        Ok(())
    }

    pub fn check_recon_grid(&self, grid: &[usize]) -> HarnessResult<()> {
        let total = self.schedule.steps;
        if let Some(bad) = grid.iter().find(|&&t| t == 0 || t >= total) {
            return Err(invalid("recon.t_grid", format!("step {bad} outside 1..{total}")));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form with defaults filled in.
    /// `output_dir` is left out since it does not affect any result.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_vec(&value).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn derived_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream)
    }

    /// Seed of sampler replicate `id`.
    pub fn sampler_seed(&self, id: u64) -> u64 {
        derive_seed(self.derived_seed(streams::SAMPLER), id)
    }

    pub fn build_schedule(&self) -> HarnessResult<Schedule> {
        let s = &self.schedule;
        let family = match s.family {
            FamilyName::Trig => ScheduleFamily::Trig,
            FamilyName::Linear => ScheduleFamily::Linear {
                beta_min: s.beta_min,
                beta_max: s.beta_max,
            },
            FamilyName::Jsd => ScheduleFamily::Jsd(s.jsd_convention),
        };
        Schedule::new(family, s.steps).map_err(|e| invalid("schedule", e))
    }

    pub fn dataset_spec(&self, n: usize, seed: u64) -> DatasetSpec {
        let d = &self.dataset;
        let kind = match d.kind {
            DatasetName::GaussianRing => DatasetKind::GaussianRing,
            DatasetName::SwissRoll => DatasetKind::SwissRoll,
            DatasetName::Checkerboard => DatasetKind::Checkerboard,
            DatasetName::Mixture => DatasetKind::Mixture {
                mixture: d.mixture.clone().expect("validated"),
            },
        };
        DatasetSpec {
            kind,
            n,
            seed,
            normalization: d.normalization,
        }
    }

    /// Training set drawn from the data stream.
    pub fn training_spec(&self) -> DatasetSpec {
        self.dataset_spec(self.dataset.n, self.derived_seed(streams::DATA))
    }

    /// Closed-form distribution of the dataset, if it has one.
    pub fn dataset_mixture(&self) -> Option<GaussianMixture> {
        analytic_mixture(&self.training_spec())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden_dims: self.model.hidden_dims.clone(),
            time_embed_dim: self.model.time_embed_dim,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.model.train_steps,
            batch_size: self.model.batch,
            lr: self.model.lr,
            gamma: self.model.gamma,
            seed: self.derived_seed(streams::TRAIN),
            norm: self.model.loss_norm,
        }
    }
}
