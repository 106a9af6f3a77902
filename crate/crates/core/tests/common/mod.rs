#![allow(dead_code)]

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use loae::data::{build_model, examples, load_clips, run_schedule, synthesize_corpus, Clip, TrainConfig, TrainOutcome};
use loae::decoder::Vocabulary;
use loae::encoder::FeatureStats;
use loae::frontend::{PatchSequence, PATCH_DIM};
use loae::model::{AacModel, Example, ModelConfig};
use loae::nn::Scalar;

pub fn random_patches(rng: &mut impl Rng, time: usize) -> PatchSequence {
    let data = (0..time * 4 * PATCH_DIM).map(|_| rng.random_range(-4.0f32..4.0)).collect();
    PatchSequence::new(data, time, 4).unwrap()
}

pub fn patches(time: usize, seed: u64) -> PatchSequence {
    random_patches(&mut ChaCha8Rng::seed_from_u64(seed), time)
}

pub const CAPTIONS: [&str; 3] = ["a low tone followed by silence", "a noise burst", "an upward chirp followed by a high tone"];

pub fn micro<S: Scalar>(cfg: ModelConfig) -> AacModel<S> {
    AacModel::new(cfg, Vocabulary::build(CAPTIONS).unwrap(), FeatureStats::identity(64)).unwrap()
}

pub fn micro_batch<S: Scalar>(m: &AacModel<S>) -> Vec<Example> {
    CAPTIONS
        .iter()
        .enumerate()
        .map(|(i, c)| m.example(&format!("c{i}"), patches(2 + i, 100 + i as u64), c))
        .collect()
}

pub fn corpus(examples: Vec<Example>) -> IndexMap<String, Vec<Example>> {
    let mut m = IndexMap::new();
    m.insert("synth".to_string(), examples);
    m
}

pub struct DeskRun {
    pub model: AacModel<f32>,
    pub outcome: TrainOutcome,
    pub clips: Vec<Clip>,
}

/// Full desk-preset training on an 8-clip synthetic corpus.
pub fn desk_run(corpus_seed: u64, train: &TrainConfig) -> DeskRun {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthesize_corpus(8, corpus_seed, dir.path()).unwrap();
    let cfg = ModelConfig::default();
    let clips = load_clips(&manifest, &cfg).unwrap();
    let mut model = build_model(cfg, &clips).unwrap();
    let ex = examples(&model, &clips);
    let outcome = run_schedule(&mut model, train, &corpus(ex)).unwrap();
    DeskRun { model, outcome, clips }
}
