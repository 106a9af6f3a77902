//! Manifests, synthetic corpora, batching, the staged training loop and
//! checkpoints.

mod batch;
mod checkpoint;
mod manifest;
mod synth;
mod train;

pub use batch::make_batches;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader, TensorEntry,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION, OptimizerHeader,
};
pub use manifest::{parse_manifest, parse_manifest_str, Manifest, ManifestEntry};
pub use synth::{caption_for, render_events, synthesize_corpus, synthesize_entries, Event, EVENT_SAMPLES};
pub use train::{
    build_model, examples, learning_rate, load_clips, run_schedule, Clip, LossCurve, LossPoint, StageConfig,
    TrainConfig, TrainOutcome, TrainingSchedule,
};

use crate::error::ModelError;
use crate::frontend::FrontendError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: missing or empty field {field:?}")]
    MissingField { line: usize, field: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite loss at stage {stage}, step {step}")]
    NonFiniteLoss { stage: usize, step: u64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("{id}: {source}")]
    Audio {
        id: String,
        #[source]
        source: FrontendError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}
