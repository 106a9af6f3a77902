use serde::{Deserialize, Serialize};

/// SPIDEr: arithmetic mean of CIDEr-D and SPICE.
pub fn spider(cider: f64, spice: f64) -> f64 {
    (cider + spice) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Multiply by `1 - penalty`.
    Scale,
    /// Set penalized sentences to zero.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FluencyPenalty {
    pub threshold: f64,
    pub penalty: f64,
    pub mode: PenaltyMode,
}

impl Default for FluencyPenalty {
    fn default() -> Self {
        Self {
            threshold: 0.90,
            penalty: 0.9,
            mode: PenaltyMode::Scale,
        }
    }
}

impl FluencyPenalty {
    /// Applies the penalty when `prob` strictly exceeds the threshold.
    pub fn apply(&self, score: f64, prob: f64) -> f64 {
        if prob > self.threshold {
            match self.mode {
                PenaltyMode::Scale => score * (1.0 - self.penalty),
                PenaltyMode::Zero => 0.0,
            }
        } else {
            score
        }
    }
}

/// SPIDEr with the fluency penalty.
pub fn spider_fl(spider: f64, fluency_prob: f64, cfg: &FluencyPenalty) -> f64 {
    cfg.apply(spider, fluency_prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert!((spider(0.4, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(spider(0.0, 0.0), 0.0);
        assert_eq!(spider(10.0, 1.0), 5.5);
        let cfg = FluencyPenalty::default();
        assert!((spider_fl(0.5, 0.95, &cfg) - 0.05).abs() < 1e-15);
        assert_eq!(spider_fl(0.5, 0.90, &cfg), 0.5);
        assert_eq!(spider_fl(0.0, 1.0, &cfg), 0.0);
        let zero = FluencyPenalty {
            mode: PenaltyMode::Zero,
            ..cfg
        };
        assert_eq!(spider_fl(0.5, 0.95, &zero), 0.0);
    }
}
