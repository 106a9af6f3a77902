//! Patch-transformer audio encoder: patch embedding, factorized learned
//! time/frequency positions, pre-norm bidirectional blocks. No classifier
//! head; one output token per input patch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::frontend::{PatchSequence, PATCH_DIM, PATCH_SIZE};
use crate::layers::{Forward, Specs};
use crate::nn::{Graph, ParamStore, Scalar, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_enc: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_time_patches: usize,
    pub freq_patches: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_enc: 64,
            layers: 2,
            heads: 4,
            ffn_mult: 4,
            max_time_patches: 512,
            freq_patches: 4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_enc == 0 || self.layers == 0 || self.heads == 0 || self.ffn_mult == 0 {
            return Err(ModelError::InvalidConfig("encoder counts must be >= 1".into()));
        }
        if self.d_enc % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_enc {} not divisible by {} heads",
                self.d_enc, self.heads
            )));
        }
        Ok(())
    }

    /// Names of the q/v projections that receive adapters.
    pub fn adapted_projections(&self) -> Vec<String> {
        (0..self.layers)
            .flat_map(|i| ["q", "v"].map(|p| format!("encoder.layers.{i}.attn.{p}")))
            .collect()
    }
}

/// Per-band corpus statistics used to standardize encoder inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureStats {
    pub fn identity(bands: usize) -> Self {
        Self {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    }

    /// Mean and standard deviation per band over every frame of `frames`
    /// (each a `bands`-wide row). Std is floored at `1e-5`.
    pub fn from_frames<'a>(bands: usize, frames: impl IntoIterator<Item = &'a [f32]>) -> Self {
        let mut sum = vec![0.0f64; bands];
        let mut sq = vec![0.0f64; bands];
        let mut n = 0usize;
        for f in frames {
            for (b, &v) in f.iter().enumerate().take(bands) {
                sum[b] += v as f64;
                sq[b] += v as f64 * v as f64;
            }
            n += 1;
        }
        if n == 0 {
            return Self::identity(bands);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| ((s / n as f64 - m * m).max(0.0).sqrt().max(1e-5)) as f32)
            .collect();
        Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        }
    }
}

/// `T × d_enc` encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticTokenSequence<S> {
    pub tokens: Tensor<S>,
}

impl<S: Scalar> AcousticTokenSequence<S> {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub(crate) fn encoder_specs(s: &mut Specs, cfg: &EncoderConfig) {
    let d = cfg.d_enc;
    s.linear("encoder.patch_embed", d, PATCH_DIM, true);
    s.normal("encoder.pos_time", &[cfg.max_time_patches, d]);
    s.normal("encoder.pos_freq", &[cfg.freq_patches, d]);
    for i in 0..cfg.layers {
        s.block(&format!("encoder.layers.{i}"), d, cfg.ffn_mult);
    }
    s.norm("encoder.norm_out", d);
}

pub fn init_encoder<S: Scalar, R: Rng>(p: &mut ParamStore<S>, rng: &mut R, cfg: &EncoderConfig) {
    let mut s = Specs::default();
    encoder_specs(&mut s, cfg);
    s.materialize(p, rng);
}

fn check_length(patches: &PatchSequence, cfg: &EncoderConfig) -> Result<(), ModelError> {
    let (tp, fp) = patches.grid();
    if tp == 0 {
        return Err(ModelError::EmptyInput);
    }
    if tp > cfg.max_time_patches {
        return Err(ModelError::TooLong {
            len: tp,
            max: cfg.max_time_patches,
        });
    }
    if fp != cfg.freq_patches {
        return Err(ModelError::InvalidConfig(format!(
            "{fp} frequency patches, encoder expects {}",
            cfg.freq_patches
        )));
    }
    Ok(())
}

/// Standardized patch matrix (`count × 256`).
pub fn standardize<S: Scalar>(patches: &PatchSequence, stats: &FeatureStats) -> Tensor<S> {
    let (_, fp) = patches.grid();
    let mut data = Vec::with_capacity(patches.data().len());
    for i in 0..patches.count() {
        let f = i % fp;
        for (j, &v) in patches.patch(i).iter().enumerate() {
            let band = f * PATCH_SIZE + j % PATCH_SIZE;
            data.push(S::from_f64(((v - stats.mean[band]) / stats.std[band]) as f64));
        }
    }
    Tensor::new(vec![patches.count(), PATCH_DIM], data).expect("patch matrix shape")
}

/// Linear patch projection plus summed time and frequency position rows.
pub fn embed_patches<S: Scalar>(
    f: &mut Forward<'_, S>,
    patches: &PatchSequence,
    cfg: &EncoderConfig,
    stats: &FeatureStats,
) -> Result<Var, ModelError> {
    check_length(patches, cfg)?;
    let (_, fp) = patches.grid();
    let x = f.g.constant(standardize(patches, stats));
    let e = f.linear("encoder.patch_embed", x)?;
    let time_ids: Vec<usize> = (0..patches.count()).map(|i| i / fp).collect();
    let freq_ids: Vec<usize> = (0..patches.count()).map(|i| i % fp).collect();
    let pt = f.param("encoder.pos_time")?;
    let pf = f.param("encoder.pos_freq")?;
    let pt = f.g.gather_rows(pt, &time_ids)?;
    let pf = f.g.gather_rows(pf, &freq_ids)?;
    let e = f.g.add(e, pt)?;
    Ok(f.g.add(e, pf)?)
}

pub fn encode_graph<S: Scalar>(
    f: &mut Forward<'_, S>,
    patches: &PatchSequence,
    cfg: &EncoderConfig,
    stats: &FeatureStats,
) -> Result<Var, ModelError> {
    let mut x = embed_patches(f, patches, cfg, stats)?;
    for i in 0..cfg.layers {
        x = f.block(&format!("encoder.layers.{i}"), x, cfg.heads, None)?;
    }
    Ok(f.norm("encoder.norm_out", x)?)
}

/// Runs the encoder without recording gradients.
pub fn encode<S: Scalar>(
    params: &ParamStore<S>,
    cfg: &EncoderConfig,
    stats: &FeatureStats,
    patches: &PatchSequence,
    lora_scaling: Option<f64>,
) -> Result<AcousticTokenSequence<S>, ModelError> {
    let mut g = Graph::new();
    let mut f = Forward::new(&mut g, params, lora_scaling);
    f.track_grads = false;
    let out = encode_graph(&mut f, patches, cfg, stats)?;
    Ok(AcousticTokenSequence {
        tokens: g.value(out).clone(),
    })
}
