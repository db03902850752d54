use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("step index {t} outside 0..={max}")]
    StepOutOfRange { t: usize, max: usize },

    #[error("{op} is undefined at t = {t}")]
    Domain { op: &'static str, t: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular inversion in {op} at t = {t}; use the direct head instead")]
    SingularInversion { op: &'static str, t: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in parameter tensor `{0}`")]
    NonFiniteParameter(String),

    #[error("training diverged at step {step}: total loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint parse error at byte offset {offset}: {msg}")]
    Checkpoint { offset: usize, msg: String },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("autodiff tape: {0}")]
    Tape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_same_shape(
    what: &str,
    a: &ndarray::ArrayView2<f64>,
    b: &ndarray::ArrayView2<f64>,
) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}
