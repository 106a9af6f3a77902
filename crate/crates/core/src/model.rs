//! End-to-end captioning model: frontend → encoder → bridge → decoder.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{self, BridgeConfig};
use crate::decoder::{self, DecoderConfig, Hypothesis, SpliceSequence, Vocabulary};
use crate::encoder::{self, EncoderConfig, FeatureStats};
use crate::error::ModelError;
use crate::frontend::{compute_log_mel, patchify, FrontendConfig, PatchSequence, Waveform};
use crate::layers::{Forward, Specs};
use crate::lora::{self, TrainMode, TrainStrategy, TrainableSet, LORA_A, LORA_B};
use crate::nn::{Graph, NnError, Objective, ParamStore, Scalar, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self { rank: 8, alpha: 16.0 }
    }
}

impl LoraConfig {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub frontend: FrontendConfig,
    pub encoder: EncoderConfig,
    pub bridge: BridgeConfig,
    pub decoder: DecoderConfig,
    pub lora: LoraConfig,
    pub strategy: TrainStrategy,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            encoder: EncoderConfig::default(),
            bridge: BridgeConfig::default(),
            decoder: DecoderConfig::default(),
            lora: LoraConfig::default(),
            strategy: TrainStrategy::default(),
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small end-to-end model used by gradient checks: encoder 2×64,
    /// bridge 1+1, decoder 2×64.
    pub fn micro() -> Self {
        Self {
            encoder: EncoderConfig {
                d_enc: 64,
                layers: 2,
                heads: 4,
                ffn_mult: 2,
                max_time_patches: 16,
                freq_patches: 4,
            },
            bridge: BridgeConfig {
                d_q: 64,
                d_dec: 64,
                ffn_mult: 2,
                max_windows: 8,
                ..BridgeConfig::default()
            },
            decoder: DecoderConfig {
                d_dec: 64,
                layers: 2,
                heads: 4,
                ffn_mult: 2,
                max_seq_len: 64,
                max_caption_len: 16,
                length_exponent: 0.75,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        self.bridge.validate()?;
        self.decoder.validate()?;
        if self.bridge.d_dec != self.decoder.d_dec {
            return Err(ModelError::InvalidConfig(format!(
                "bridge d_dec {} differs from decoder d_dec {}",
                self.bridge.d_dec, self.decoder.d_dec
            )));
        }
        if self.frontend.n_mels != self.encoder.freq_patches * crate::frontend::PATCH_SIZE {
            return Err(ModelError::InvalidConfig(format!(
                "{} mel bands do not tile into {} frequency patches",
                self.frontend.n_mels, self.encoder.freq_patches
            )));
        }
        if self.lora.rank == 0 {
            return Err(ModelError::InvalidConfig("lora rank must be >= 1".into()));
        }
        for (mode, d, part) in [
            (self.strategy.encoder, self.encoder.d_enc, "encoder"),
            (self.strategy.decoder, self.decoder.d_dec, "decoder"),
        ] {
            if mode == crate::lora::TrainMode::Lora && self.lora.rank > d {
                return Err(ModelError::InvalidConfig(format!(
                    "lora rank {} exceeds {part} width {d}",
                    self.lora.rank
                )));
            }
        }
        Ok(())
    }

    /// Name and shape of every parameter a model with this configuration
    /// holds, adapters included, computed without allocating tensors.
    pub fn param_shapes(&self, vocab_len: usize) -> Vec<(String, Vec<usize>)> {
        let mut s = Specs::default();
        encoder::encoder_specs(&mut s, &self.encoder);
        bridge::bridge_specs(&mut s, &self.bridge, self.encoder.d_enc);
        decoder::decoder_specs(&mut s, &self.decoder, vocab_len);
        let r = self.lora.rank;
        let mut out: Vec<(String, Vec<usize>)> = s.0.into_iter().map(|p| (p.name, p.shape)).collect();
        let adapted = [
            (self.strategy.encoder, self.encoder.adapted_projections(), self.encoder.d_enc),
            (self.strategy.decoder, self.decoder.adapted_projections(), self.decoder.d_dec),
        ];
        for (mode, prefixes, d) in adapted {
            if mode == TrainMode::Lora {
                for p in prefixes {
                    out.push((format!("{p}.{LORA_A}"), vec![r, d]));
                    out.push((format!("{p}.{LORA_B}"), vec![d, r]));
                }
            }
        }
        out
    }
}

/// One audio/caption training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub patches: PatchSequence,
    pub caption: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AacModel<S> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub stats: FeatureStats,
    pub params: ParamStore<S>,
}

/// Log-mel patches for a waveform under `cfg`.
pub fn features(w: &Waveform, cfg: &FrontendConfig) -> Result<PatchSequence, ModelError> {
    Ok(patchify(&compute_log_mel(w, cfg)?)?)
}

impl<S: Scalar> AacModel<S> {
    /// Fresh model seeded by `config.init_seed`, with adapters attached and
    /// trainable flags set according to the strategy.
    pub fn new(config: ModelConfig, vocab: Vocabulary, stats: FeatureStats) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamStore::new();
        encoder::init_encoder(&mut params, &mut rng, &config.encoder);
        bridge::init_bridge(&mut params, &mut rng, &config.bridge, config.encoder.d_enc);
        decoder::init_decoder(&mut params, &mut rng, &config.decoder, vocab.len());
        let mut model = Self {
            config,
            vocab,
            stats,
            params,
        };
        model.attach_adapters()?;
        model.apply_strategy()?;
        Ok(model)
    }

    fn attach_adapters(&mut self) -> Result<(), ModelError> {
        let cfg = &self.config;
        let seed = cfg.init_seed ^ 0x4c6f_5241;
        if cfg.strategy.encoder == TrainMode::Lora {
            lora::attach_adapters(&mut self.params, &cfg.encoder.adapted_projections(), cfg.lora.rank, cfg.lora.alpha, seed)?;
        }
        if cfg.strategy.decoder == TrainMode::Lora {
            lora::attach_adapters(
                &mut self.params,
                &cfg.decoder.adapted_projections(),
                cfg.lora.rank,
                cfg.lora.alpha,
                seed.wrapping_add(1 << 32),
            )?;
        }
        Ok(())
    }

    /// Re-derives trainable flags from `config.strategy`.
    pub fn apply_strategy(&mut self) -> Result<TrainableSet, ModelError> {
        Ok(lora::apply_strategy(&mut self.params, &self.config.strategy)?)
    }

    /// Switches strategy, attaching adapters where newly required.
    pub fn set_strategy(&mut self, strategy: TrainStrategy) -> Result<TrainableSet, ModelError> {
        self.config.strategy = strategy;
        self.attach_adapters()?;
        self.apply_strategy()
    }

    pub fn has_adapters(&self) -> bool {
        self.params.names().any(|n| n.ends_with(LORA_A))
    }

    pub fn lora_scaling(&self) -> Option<f64> {
        self.has_adapters().then(|| self.config.lora.scaling())
    }

    /// Folds adapters into base weights. Components trained with LoRA are
    /// frozen afterwards.
    pub fn merge_lora(&mut self) -> Result<usize, ModelError> {
        let n = lora::merge_adapters(&mut self.params, self.config.lora.scaling())?;
        let s = &mut self.config.strategy;
        for m in [&mut s.encoder, &mut s.decoder] {
            if *m == TrainMode::Lora {
                *m = TrainMode::Frozen;
            }
        }
        self.apply_strategy()?;
        Ok(n)
    }

    pub fn cast<T: Scalar>(&self) -> AacModel<T> {
        AacModel {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            stats: self.stats.clone(),
            params: self.params.cast(),
        }
    }

    pub fn features(&self, w: &Waveform) -> Result<PatchSequence, ModelError> {
        features(w, &self.config.frontend)
    }

    /// Bridge output (`L × d_dec`) for `patches`.
    pub fn acoustic(&self, patches: &PatchSequence) -> Result<Tensor<S>, ModelError> {
        acoustic_with(&self.params, &self.config, &self.stats, patches, self.lora_scaling())
    }

    pub fn loss(&self, batch: &[Example]) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let mut f = Forward::new(&mut g, &self.params, self.lora_scaling());
        f.track_grads = false;
        let (l, _) = loss_graph(&mut f, &self.config, &self.vocab, &self.stats, batch)?;
        Ok(g.value(l).data()[0].as_f64())
    }

    /// Loss and gradients of every trainable parameter.
    pub fn loss_and_grads(&self, batch: &[Example]) -> Result<(f64, IndexMap<String, Tensor<S>>), ModelError> {
        loss_and_grads_with(&self.params, &self.config, &self.vocab, &self.stats, batch, self.lora_scaling())
    }

    pub fn greedy(&self, patches: &PatchSequence) -> Result<Vec<usize>, ModelError> {
        let a = self.acoustic(patches)?;
        decoder::greedy_decode(&self.params, &self.config.decoder, &self.vocab, &a, self.lora_scaling())
    }

    pub fn beam(&self, patches: &PatchSequence, beam: usize) -> Result<Hypothesis, ModelError> {
        let a = self.acoustic(patches)?;
        decoder::beam_decode(&self.params, &self.config.decoder, &self.vocab, &a, beam, self.lora_scaling())
    }

    /// Decoded caption text; `beam` of `None` decodes greedily.
    pub fn caption(&self, patches: &PatchSequence, beam: Option<usize>) -> Result<String, ModelError> {
        let ids = match beam {
            None => self.greedy(patches)?,
            Some(k) => self.beam(patches, k)?.caption().to_vec(),
        };
        Ok(self.vocab.detokenize(&ids))
    }

    /// Tokenized example; captions are truncated to `max_caption_len`.
    pub fn example(&self, id: &str, patches: PatchSequence, caption: &str) -> Example {
        let mut ids = self.vocab.tokenize(caption);
        ids.truncate(self.config.decoder.max_caption_len);
        Example {
            id: id.to_string(),
            patches,
            caption: ids,
        }
    }
}

pub fn acoustic_with<S: Scalar>(
    params: &ParamStore<S>,
    cfg: &ModelConfig,
    stats: &FeatureStats,
    patches: &PatchSequence,
    lora_scaling: Option<f64>,
) -> Result<Tensor<S>, ModelError> {
    let mut g = Graph::new();
    let mut f = Forward::new(&mut g, params, lora_scaling);
    f.track_grads = false;
    let a = acoustic_graph(&mut f, cfg, stats, patches)?;
    Ok(g.value(a).clone())
}

pub fn acoustic_graph<S: Scalar>(
    f: &mut Forward<'_, S>,
    cfg: &ModelConfig,
    stats: &FeatureStats,
    patches: &PatchSequence,
) -> Result<Var, ModelError> {
    let enc = encoder::encode_graph(f, patches, &cfg.encoder, stats)?;
    Ok(bridge::bridge_graph(f, enc, &cfg.bridge)?.out)
}

/// Mean caption cross-entropy over a batch; every example is evaluated on
/// its own sequence, so no padding enters the computation.
pub fn loss_graph<S: Scalar>(
    f: &mut Forward<'_, S>,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    stats: &FeatureStats,
    batch: &[Example],
) -> Result<(Var, usize), ModelError> {
    let mut seqs: Vec<(SpliceSequence, Var)> = Vec::with_capacity(batch.len());
    for ex in batch {
        let a = acoustic_graph(f, cfg, stats, &ex.patches)?;
        let l = f.g.value(a).rows();
        let seq = decoder::assemble_sequence(l, Some(&ex.caption), vocab, cfg.decoder.max_seq_len)?;
        seqs.push((seq, a));
    }
    decoder::batch_loss(f, &cfg.decoder, &seqs)
}

pub fn loss_and_grads_with<S: Scalar>(
    params: &ParamStore<S>,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    stats: &FeatureStats,
    batch: &[Example],
    lora_scaling: Option<f64>,
) -> Result<(f64, IndexMap<String, Tensor<S>>), ModelError> {
    let mut g = Graph::new();
    let mut f = Forward::new(&mut g, params, lora_scaling);
    let (l, _) = loss_graph(&mut f, cfg, vocab, stats, batch)?;
    let grads = g.backward(l).named(&g);
    Ok((g.value(l).data()[0].as_f64(), grads))
}

/// Batch loss as a function of the parameter table, for gradient checking.
pub struct LossObjective<'a> {
    pub model: &'a AacModel<f64>,
    pub batch: &'a [Example],
}

fn to_nn(e: ModelError) -> NnError {
    match e {
        ModelError::Nn(e) => e,
        other => NnError::DimensionMismatch(other.to_string()),
    }
}

impl Objective for LossObjective<'_> {
    fn value(&self, params: &ParamStore<f64>) -> Result<f64, NnError> {
        let m = self.model;
        let mut g = Graph::new();
        let mut f = Forward::new(&mut g, params, m.lora_scaling());
        f.track_grads = false;
        let (l, _) = loss_graph(&mut f, &m.config, &m.vocab, &m.stats, self.batch).map_err(to_nn)?;
        Ok(g.value(l).data()[0])
    }

    fn value_and_grad(&self, params: &ParamStore<f64>) -> Result<(f64, IndexMap<String, Tensor<f64>>), NnError> {
        let m = self.model;
        loss_and_grads_with(params, &m.config, &m.vocab, &m.stats, self.batch, m.lora_scaling()).map_err(to_nn)
    }
}
