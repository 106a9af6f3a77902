//! Differentiable numeric substrate shared by the encoder, bridge and decoder.

mod attention;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use attention::{multi_head_attention, AttentionOutput};
pub use gradcheck::{grad_check, jitter, relative_error, GradCheckConfig, GradCheckReport, Objective};
pub use graph::{Gradients, Graph, Mask, Var};
pub use optim::{adamw_step, clip_grad_norm, AdamWConfig, OptimizerState};
pub use params::{init_normal, ParamStore};
pub use tensor::{rms_norm, softmax, Scalar, Tensor};

/// Epsilon added to the mean square before the root in RMS normalization.
pub const RMS_EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("every target position is ignored")]
    EmptyTargetSet,
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}
