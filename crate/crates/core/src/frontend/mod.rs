//! 16 kHz waveform → log-mel spectrogram → non-overlapping 16×16 patches.

mod mel;
mod patch;
mod wav;

pub use mel::{compute_log_mel, hz_to_mel, mel_to_hz, FrontendConfig, LogMelSpectrogram, MelFilterbank};
pub use patch::{patch_count, patchify, unpatchify, PatchSequence, PATCH_DIM, PATCH_SIZE};
pub use wav::{encode_wav, load_wav, parse_wav, write_wav, Waveform};

pub const SAMPLE_RATE: u32 = 16_000;
/// Natural log of the power floor `1e-10`.
pub const LOG_FLOOR: f64 = -23.025_850_929_940_457;

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("input too short: {samples} samples, need at least {needed}")]
    InputTooShort { samples: usize, needed: usize },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("spectrogram has {found} mel bands, expected {expected}")]
    BandMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
