use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::batch::make_batches;
use super::manifest::Manifest;
use super::DataError;
use crate::decoder::Vocabulary;
use crate::encoder::FeatureStats;
use crate::frontend::{compute_log_mel, load_wav, patchify, LogMelSpectrogram, PatchSequence};
use crate::model::{AacModel, Example, ModelConfig};
use crate::nn::{adamw_step, clip_grad_norm, AdamWConfig, OptimizerState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    /// Corpus names trained in this stage; empty selects every corpus.
    #[serde(default)]
    pub datasets: Vec<String>,
}

impl StageConfig {
    pub fn new(epochs: usize, batch_size: usize, peak_lr: f64, warmup_epochs: usize) -> Self {
        Self {
            epochs,
            batch_size,
            peak_lr,
            warmup_epochs,
            datasets: Vec::new(),
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.max(1))
    }

    pub fn warmup_steps(&self, n: usize) -> usize {
        self.warmup_epochs * self.steps_per_epoch(n)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let ok = self.epochs > 0 && self.batch_size > 0 && self.warmup_epochs > 0;
        if !ok || !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(DataError::InvalidSchedule(format!("stage values must be > 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub stages: Vec<StageConfig>,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self::standard()
    }
}

impl TrainingSchedule {
    /// Stage 1: 15 epochs, batch 48, lr 5e-5. Stage 2: 30 epochs, batch 32,
    /// lr 5e-6. Both warm up over 2 epochs.
    pub fn standard() -> Self {
        Self {
            stages: vec![StageConfig::new(15, 48, 5e-5, 2), StageConfig::new(30, 32, 5e-6, 2)],
        }
    }

    /// Desk-scale preset for the 8-clip synthetic corpus.
    pub fn desk() -> Self {
        Self {
            stages: vec![StageConfig::new(200, 8, 5e-4, 2), StageConfig::new(10, 8, 5e-5, 2)],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self::standard()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.stages.is_empty() {
            return Err(DataError::InvalidSchedule("no stages".into()));
        }
        self.stages.iter().try_for_each(StageConfig::validate)
    }
}

/// Linear warmup from 0 to `peak` over `warmup_steps`, then constant.
/// `step` is 1-based.
pub fn learning_rate(step: usize, peak: f64, warmup_steps: usize) -> f64 {
    if warmup_steps == 0 || step >= warmup_steps {
        peak
    } else {
        peak * step as f64 / warmup_steps as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub schedule: TrainingSchedule,
    pub optimizer: AdamWConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: TrainingSchedule::standard(),
            optimizer: AdamWConfig::default(),
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub stage: usize,
    pub epoch: usize,
    /// 1-based step within the stage.
    pub step: usize,
    pub lr: f64,
    /// Loss before the update.
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub points: Vec<LossPoint>,
}

impl LossCurve {
    pub fn last_loss(&self) -> Option<f64> {
        self.points.last().map(|p| p.loss)
    }

    pub fn stage(&self, stage: usize) -> impl Iterator<Item = &LossPoint> {
        self.points.iter().filter(move |p| p.stage == stage)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub curve: LossCurve,
    /// Optimizer state at the end of the final stage.
    pub optimizer: OptimizerState<f32>,
}

/// One decoded clip with its feature views.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub id: String,
    pub mel: LogMelSpectrogram,
    pub patches: PatchSequence,
    pub captions: Vec<String>,
}

pub fn load_clips(manifest: &Manifest, cfg: &ModelConfig) -> Result<Vec<Clip>, DataError> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let audio = |source| DataError::Audio {
                id: e.id.clone(),
                source,
            };
            let w = load_wav(manifest.audio_path(e)).map_err(audio)?;
            let mel = compute_log_mel(&w, &cfg.frontend).map_err(audio)?;
            let patches = patchify(&mel).map_err(audio)?;
            Ok(Clip {
                id: e.id.clone(),
                mel,
                patches,
                captions: e.captions.clone(),
            })
        })
        .collect()
}

/// Fresh model whose vocabulary and feature statistics come from `clips`.
pub fn build_model(config: ModelConfig, clips: &[Clip]) -> Result<AacModel<f32>, DataError> {
    let vocab = Vocabulary::build(clips.iter().flat_map(|c| c.captions.iter().map(String::as_str)))?;
    let bands = config.frontend.n_mels;
    let stats = FeatureStats::from_frames(bands, clips.iter().flat_map(|c| (0..c.mel.frames()).map(|t| c.mel.frame(t))));
    Ok(AacModel::new(config, vocab, stats)?)
}

/// One example per (clip, caption) pair.
pub fn examples<S: crate::nn::Scalar>(model: &AacModel<S>, clips: &[Clip]) -> Vec<Example> {
    clips
        .iter()
        .flat_map(|c| c.captions.iter().map(|cap| model.example(&c.id, c.patches.clone(), cap)))
        .collect()
}

/// Runs every stage in order. Each stage starts a fresh optimizer from the
/// previous stage's parameters.
pub fn run_schedule(
    model: &mut AacModel<f32>,
    cfg: &TrainConfig,
    corpora: &IndexMap<String, Vec<Example>>,
) -> Result<TrainOutcome, DataError> {
    cfg.schedule.validate()?;
    let mut curve = LossCurve::default();
    let mut optimizer = OptimizerState::new(cfg.optimizer);
    for (si, stage) in cfg.schedule.stages.iter().enumerate() {
        let pool: Vec<&Example> = if stage.datasets.is_empty() {
            corpora.values().flatten().collect()
        } else {
            let mut v = Vec::new();
            for name in &stage.datasets {
                let c = corpora
                    .get(name)
                    .ok_or_else(|| DataError::InvalidSchedule(format!("stage {} names unknown corpus {name:?}", si + 1)))?;
                v.extend(c);
            }
            v
        };
        if pool.is_empty() {
            return Err(DataError::InvalidSchedule(format!("stage {} has no examples", si + 1)));
        }
        optimizer = OptimizerState::new(cfg.optimizer);
        let warmup = stage.warmup_steps(pool.len());
        let stage_seed = cfg.seed.wrapping_add(si as u64);
        let mut step = 0;
        for epoch in 0..stage.epochs {
            for idx in make_batches(pool.len(), stage.batch_size, stage_seed, epoch as u64) {
                step += 1;
                let batch: Vec<Example> = idx.iter().map(|&i| pool[i].clone()).collect();
                let (loss, mut grads) = model.loss_and_grads(&batch)?;
                if !loss.is_finite() {
                    return Err(DataError::NonFiniteLoss {
                        stage: si + 1,
                        step: step as u64,
                    });
                }
                let grad_norm = match cfg.clip_norm {
                    Some(max) => clip_grad_norm(&mut grads, max),
                    None => grads.values().map(|g| g.sq_norm()).sum::<f64>().sqrt(),
                };
                let lr = learning_rate(step, stage.peak_lr, warmup);
                adamw_step(&mut model.params, &grads, &mut optimizer, lr).map_err(crate::ModelError::from)?;
                log::debug!("stage {} step {step} lr {lr:.3e} loss {loss:.5}", si + 1);
                curve.points.push(LossPoint {
                    stage: si + 1,
                    epoch: epoch + 1,
                    step,
                    lr,
                    loss,
                    grad_norm,
                });
            }
        }
    }
    Ok(TrainOutcome { curve, optimizer })
}
