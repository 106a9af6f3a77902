use super::{FrontendError, LogMelSpectrogram, LOG_FLOOR};

pub const PATCH_SIZE: usize = 16;
pub const PATCH_DIM: usize = PATCH_SIZE * PATCH_SIZE;

/// Flattened 16×16 tiles in time-major order, frequency ascending inside
/// each time step. Within a tile values are row-major over (frame, band).
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSequence {
    patches: Vec<f32>,
    time_patches: usize,
    freq_patches: usize,
}

impl PatchSequence {
    pub fn new(patches: Vec<f32>, time_patches: usize, freq_patches: usize) -> Result<Self, FrontendError> {
        if patches.len() != time_patches * freq_patches * PATCH_DIM {
            return Err(FrontendError::BandMismatch {
                expected: time_patches * freq_patches * PATCH_DIM,
                found: patches.len(),
            });
        }
        Ok(Self {
            patches,
            time_patches,
            freq_patches,
        })
    }

    pub fn count(&self) -> usize {
        self.time_patches * self.freq_patches
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.time_patches, self.freq_patches)
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        &self.patches[i * PATCH_DIM..(i + 1) * PATCH_DIM]
    }

    pub fn data(&self) -> &[f32] {
        &self.patches
    }

    /// Keeps only the first `time_patches` time steps.
    pub fn truncate_time(&self, time_patches: usize) -> Self {
        let t = time_patches.min(self.time_patches);
        Self {
            patches: self.patches[..t * self.freq_patches * PATCH_DIM].to_vec(),
            time_patches: t,
            freq_patches: self.freq_patches,
        }
    }
}

pub fn patch_count(frames: usize, n_mels: usize) -> usize {
    frames.div_ceil(PATCH_SIZE) * (n_mels / PATCH_SIZE)
}

/// Right-pads the time axis with the log floor and tiles without overlap.
pub fn patchify(m: &LogMelSpectrogram) -> Result<PatchSequence, FrontendError> {
    if m.n_mels() != 64 {
        return Err(FrontendError::BandMismatch {
            expected: 64,
            found: m.n_mels(),
        });
    }
    let fp = m.n_mels() / PATCH_SIZE;
    let tp = m.frames().div_ceil(PATCH_SIZE);
    let pad = LOG_FLOOR as f32;
    let mut out = Vec::with_capacity(tp * fp * PATCH_DIM);
    for t in 0..tp {
        for f in 0..fp {
            for dt in 0..PATCH_SIZE {
                let frame = t * PATCH_SIZE + dt;
                if frame < m.frames() {
                    out.extend_from_slice(&m.frame(frame)[f * PATCH_SIZE..(f + 1) * PATCH_SIZE]);
                } else {
                    out.extend(std::iter::repeat_n(pad, PATCH_SIZE));
                }
            }
        }
    }
    PatchSequence::new(out, tp, fp)
}

/// Inverse raster: the padded `frames × bands` matrix the patches came from.
pub fn unpatchify(p: &PatchSequence) -> Vec<f32> {
    let (tp, fp) = p.grid();
    let bands = fp * PATCH_SIZE;
    let mut out = vec![0.0f32; tp * PATCH_SIZE * bands];
    for t in 0..tp {
        for f in 0..fp {
            let tile = p.patch(t * fp + f);
            for dt in 0..PATCH_SIZE {
                let row = (t * PATCH_SIZE + dt) * bands + f * PATCH_SIZE;
                out[row..row + PATCH_SIZE].copy_from_slice(&tile[dt * PATCH_SIZE..(dt + 1) * PATCH_SIZE]);
            }
        }
    }
    out
}
