//! Two-headed MLP denoiser: autodiff, loss, optimizer, training and checkpoints.

pub mod autodiff;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, GradCheck};
pub use loss::{loss, loss_graph, LossGraph, LossNorm, LossReport, LossWeights, ParamGrads};
pub use model::{time_embedding, DenoiserModel, ModelConfig, Param};
pub use optim::{Adam, AdamConfig};
pub use train::{train, write_loss_csv, RunRecord, TrainConfig};
