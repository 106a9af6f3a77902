//! Quick built-in checks run by `loae selftest`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bridge::output_count;
use crate::data::{learning_rate, TrainingSchedule};
use crate::decoder::Vocabulary;
use crate::encoder::FeatureStats;
use crate::fluency::{correct_with_rules, detect_errors};
use crate::frontend::{PatchSequence, PATCH_DIM};
use crate::metrics::{meteor_lite, spider_fl, FluencyPenalty};
use crate::model::{AacModel, LossObjective, ModelConfig};
use crate::nn::{grad_check, init_normal, jitter, GradCheckConfig, Tensor};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn random_patches(time: usize, seed: u64) -> PatchSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: Tensor<f32> = init_normal(&mut rng, &[time * 4, PATCH_DIM], 1.0);
    PatchSequence::new(t.into_data(), time, 4).expect("grid matches data")
}

/// 64-bit central-difference check of the micro model at a jittered point.
pub fn micro_grad_check() -> CheckResult {
    let run = || -> Result<f64, String> {
        let vocab = Vocabulary::build(["a low tone followed by silence", "a noise burst"]).map_err(|e| e.to_string())?;
        let mut m: AacModel<f64> =
            AacModel::new(ModelConfig::micro(), vocab, FeatureStats::identity(64)).map_err(|e| e.to_string())?;
        jitter(&mut m.params, 0.3, 11);
        let batch = [
            m.example("a", random_patches(3, 1), "a low tone followed by silence"),
            m.example("b", random_patches(2, 2), "a noise burst"),
        ];
        let obj = LossObjective { model: &m, batch: &batch };
        let r = grad_check(&obj, &m.params, &GradCheckConfig::default()).map_err(|e| e.to_string())?;
        Ok(r.max_rel_error)
    };
    match run() {
        Ok(e) => check("gradient check", e < 1e-4, format!("max relative error {e:.3e}")),
        Err(e) => check("gradient check", false, e),
    }
}

pub fn run_all() -> Vec<CheckResult> {
    let counts: Vec<usize> = [1, 17, 18, 170, 752, 1500].iter().map(|&t| output_count(t, 17)).collect();
    let m1 = meteor_lite("a dog barks", &["a dog barks"]);
    let m2 = meteor_lite("barks a dog", &["a dog barks"]);
    let pen = FluencyPenalty::default();
    let car = "a car drives by and then another car drives by and then another car drives by \
               and then another car drives by and then another car drives by";
    let fixed = correct_with_rules(car);
    let sched = TrainingSchedule::standard();
    let s1 = &sched.stages[0];
    let w = s1.warmup_steps(48 * 10);
    vec![
        micro_grad_check(),
        check("compression count", counts == [1, 1, 2, 10, 45, 89], format!("{counts:?}")),
        check(
            "meteor hand values",
            (m1 - 0.98148).abs() < 1e-5 && (m2 - 0.85185).abs() < 1e-5,
            format!("{m1:.5} {m2:.5}"),
        ),
        check(
            "spider-fl gate",
            (spider_fl(0.5, 0.95, &pen) - 0.05).abs() < 1e-15 && spider_fl(0.5, 0.90, &pen) == 0.5,
            String::new(),
        ),
        check(
            "fluency rules",
            detect_errors(car).probability == 0.95
                && fixed == "a car drives by and then another car drives by"
                && detect_errors(&fixed).probability == 0.0,
            fixed,
        ),
        check(
            "warmup law",
            learning_rate(w / 2, s1.peak_lr, w) == s1.peak_lr / 2.0 && learning_rate(w + 1, s1.peak_lr, w) == s1.peak_lr,
            format!("warmup {w} steps"),
        ),
    ]
}
