mod common;

use common::{corpus, micro, micro_batch};
use indexmap::IndexMap;
use loae::data::{
    build_model, decode_checkpoint, encode_checkpoint, examples, load_checkpoint, load_clips, parse_manifest,
    run_schedule, save_checkpoint, synthesize_corpus, DataError, StageConfig, TrainConfig, TrainingSchedule,
};
use loae::lora::{TrainMode, TrainStrategy, LORA_A, LORA_B};
use loae::model::{AacModel, ModelConfig};

fn schedule(stages: Vec<StageConfig>) -> TrainConfig {
    TrainConfig {
        schedule: TrainingSchedule { stages },
        ..TrainConfig::default()
    }
}

#[test]
fn stage_two_starts_where_stage_one_ends() {
    let m: AacModel<f32> = micro(ModelConfig::micro());
    let batch = micro_batch(&m);
    let n = batch.len();
    let s1 = StageConfig::new(6, n, 1e-3, 2);
    let s2 = StageConfig::new(2, n, 1e-4, 2);

    let mut only_first = m.clone();
    run_schedule(&mut only_first, &schedule(vec![s1.clone()]), &corpus(batch.clone())).unwrap();
    let end_of_stage_one = only_first.loss(&batch).unwrap();

    let mut both = m.clone();
    let out = run_schedule(&mut both, &schedule(vec![s1, s2]), &corpus(batch)).unwrap();
    let first_of_two = out.curve.stage(2).next().unwrap().loss;
    let rel = (first_of_two - end_of_stage_one).abs() / end_of_stage_one.abs();
    assert!(rel < 1e-6, "{first_of_two} vs {end_of_stage_one}");
    assert_eq!(out.curve.points.len(), 8);
}

#[test]
fn lora_checkpoints_keep_base_blobs() {
    let mut cfg = ModelConfig::micro();
    cfg.strategy = TrainStrategy::uniform(TrainMode::Lora);
    let mut m: AacModel<f32> = micro(cfg);
    let init = decode_checkpoint(&encode_checkpoint(&m, None)).unwrap().0;
    let batch = micro_batch(&m);
    run_schedule(&mut m, &schedule(vec![StageConfig::new(5, 2, 1e-3, 1)]), &corpus(batch)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lora.ckpt");
    save_checkpoint(&m, None, &path).unwrap();
    let (saved, opt) = load_checkpoint(&path).unwrap();
    assert!(opt.is_none());
    let mut frozen = 0;
    for (name, t) in saved.params.iter() {
        let adapter = name.ends_with(LORA_A) || name.ends_with(LORA_B);
        if !adapter && !name.starts_with("bridge.") {
            let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = init.params.get(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "{name}");
            assert!(!saved.params.is_trainable(name));
            frozen += 1;
        }
    }
    assert!(frozen > 0);
}

#[test]
fn manifests_concatenate_into_named_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthesize_corpus(3, 1, dir.path().join("a")).unwrap();
    let b = synthesize_corpus(2, 2, dir.path().join("b")).unwrap();
    let a = parse_manifest(a.root.join("manifest.jsonl")).unwrap();
    let b = parse_manifest(b.root.join("manifest.jsonl")).unwrap();
    let mut cfg = ModelConfig::micro();
    cfg.encoder.max_time_patches = 32;
    cfg.decoder.max_caption_len = 40;
    let ca = load_clips(&a, &cfg).unwrap();
    let cb = load_clips(&b, &cfg).unwrap();
    let all: Vec<_> = ca.iter().chain(&cb).cloned().collect();
    let mut model = build_model(cfg, &all).unwrap();
    let mut corpora = IndexMap::new();
    corpora.insert("a".to_string(), examples(&model, &ca));
    corpora.insert("b".to_string(), examples(&model, &cb));

    let mut only_b = StageConfig::new(1, 1, 1e-4, 1);
    only_b.datasets = vec!["b".into()];
    let out = run_schedule(&mut model, &schedule(vec![StageConfig::new(1, 2, 1e-4, 1), only_b]), &corpora).unwrap();
    assert_eq!(out.curve.stage(1).count(), 3);
    assert_eq!(out.curve.stage(2).count(), 2);

    let mut unknown = StageConfig::new(1, 1, 1e-4, 1);
    unknown.datasets = vec!["c".into()];
    assert!(matches!(
        run_schedule(&mut model, &schedule(vec![unknown]), &corpora),
        Err(DataError::InvalidSchedule(_))
    ));
}
