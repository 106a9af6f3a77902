//! Fluency error detection and gated correction.

mod external;
mod rules;

pub use external::{
    correct_external, parse_completion, render_prompt, request_body, ExternalConfig, ExternalError, PROMPT_II,
};
pub use rules::{correct_with_rules, detect_errors, ErrorAssessment, ErrorDetector, Rule, RuleDetector, DANGLING, RULE_PROBABILITY};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    Rules,
    External,
    ExternalWithRulesFallback,
}

impl FromStr for CorrectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rules" => Ok(Self::Rules),
            "external" => Ok(Self::External),
            "external_with_rules_fallback" => Ok(Self::ExternalWithRulesFallback),
            other => Err(format!("unknown correction mode {other:?}")),
        }
    }
}

impl fmt::Display for CorrectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rules => "rules",
            Self::External => "external",
            Self::ExternalWithRulesFallback => "external_with_rules_fallback",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectorConfig {
    pub threshold: f64,
    pub mode: CorrectionMode,
    pub external: ExternalConfig,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.90,
            mode: CorrectionMode::Rules,
            external: ExternalConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOutcome {
    pub text: String,
    pub pre: ErrorAssessment,
    pub post: ErrorAssessment,
    pub corrected: bool,
    pub warnings: Vec<String>,
}

/// Corrects `text` once when its error probability strictly exceeds the
/// threshold, then re-assesses. Text at or below the threshold is returned
/// untouched.
pub fn correction_pipeline(
    text: &str,
    cfg: &CorrectorConfig,
    detector: &dyn ErrorDetector,
) -> Result<CorrectionOutcome, ExternalError> {
    let pre = detector.assess(text);
    if pre.probability <= cfg.threshold {
        return Ok(CorrectionOutcome {
            text: text.to_string(),
            post: pre.clone(),
            pre,
            corrected: false,
            warnings: Vec::new(),
        });
    }
    let mut warnings = Vec::new();
    let fixed = match cfg.mode {
        CorrectionMode::Rules => correct_with_rules(text),
        CorrectionMode::External => correct_external(text, &cfg.external)?,
        CorrectionMode::ExternalWithRulesFallback => match correct_external(text, &cfg.external) {
            Ok(t) => t,
            Err(e) => {
                let w = format!("external corrector failed ({e}); used rule corrector");
                log::warn!("{w}");
                warnings.push(w);
                correct_with_rules(text)
            }
        },
    };
    let post = detector.assess(&fixed);
    Ok(CorrectionOutcome {
        text: fixed,
        pre,
        post,
        corrected: true,
        warnings,
    })
}
