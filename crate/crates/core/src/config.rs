//! Top-level run configuration: one JSON document holding every module's
//! settings. Missing fields take their defaults.

use serde::{Deserialize, Serialize};

use crate::data::TrainConfig;
use crate::fluency::CorrectorConfig;
use crate::metrics::MetricsConfig;
use crate::model::ModelConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corrector: CorrectorConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
