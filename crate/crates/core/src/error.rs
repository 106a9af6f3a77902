use crate::frontend::FrontendError;
use crate::lora::LoraError;
use crate::nn::NnError;

/// Errors raised while running the encoder, bridge or decoder.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("caption corpus is empty")]
    EmptyCorpus,
    #[error("input is empty")]
    EmptyInput,
    #[error("input too long: {len} exceeds limit {max}")]
    TooLong { len: usize, max: usize },
    #[error("spliced sequence of {len} positions exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Lora(#[from] LoraError),
}
