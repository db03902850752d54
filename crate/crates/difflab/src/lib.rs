//! Experiment harness for `difflab-core`: JSON configs in, CSV artifacts,
//! raw tensors, checkpoints and a manifest out.

// NaN must fail range checks, so these are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{
    run_convergence_study, run_eval, run_recon_curve, run_sample, run_schedule_dump, run_train,
};
pub use config::ExperimentConfig;
pub use error::{HarnessError, HarnessResult};
pub use manifest::{Manifest, MANIFEST_NAME};
