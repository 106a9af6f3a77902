use serde::{Deserialize, Serialize};

use crate::metrics::metric_tokenize;

/// Tokens that may not end a fluent caption.
pub const DANGLING: [&str; 7] = ["and", "then", "with", "of", "a", "the", "to"];
pub const RULE_PROBABILITY: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// An n-gram (n >= 3) repeated three or more times in a row.
    R1,
    /// Caption ends in a conjunction, preposition or article.
    R2,
    /// Fewer than two tokens.
    R3,
    /// A single token repeated three or more times in a row.
    R4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorAssessment {
    pub probability: f64,
    pub triggered_rules: Vec<Rule>,
}

pub trait ErrorDetector {
    fn assess(&self, text: &str) -> ErrorAssessment;
}

/// Fixed-probability rule detector.
#[derive(Clone, Debug)]
pub struct RuleDetector {
    pub probability: f64,
}

impl Default for RuleDetector {
    fn default() -> Self {
        Self {
            probability: RULE_PROBABILITY,
        }
    }
}

impl ErrorDetector for RuleDetector {
    fn assess(&self, text: &str) -> ErrorAssessment {
        let toks = metric_tokenize(text);
        let mut fired = Vec::new();
        if (3..=toks.len() / 3).any(|n| has_repeat(&toks, n)) {
            fired.push(Rule::R1);
        }
        if toks.last().is_some_and(|t| DANGLING.contains(&t.as_str())) {
            fired.push(Rule::R2);
        }
        if toks.len() < 2 {
            fired.push(Rule::R3);
        }
        if has_repeat(&toks, 1) {
            fired.push(Rule::R4);
        }
        ErrorAssessment {
            probability: if fired.is_empty() { 0.0 } else { self.probability },
            triggered_rules: fired,
        }
    }
}

pub fn detect_errors(text: &str) -> ErrorAssessment {
    RuleDetector::default().assess(text)
}

/// Number of consecutive copies of `toks[i..i+n]` starting at `i`.
fn repeats_at<T: PartialEq>(toks: &[T], i: usize, n: usize) -> usize {
    let unit = &toks[i..i + n];
    let mut k = 1;
    while i + (k + 1) * n <= toks.len() && &toks[i + k * n..i + (k + 1) * n] == unit {
        k += 1;
    }
    k
}

fn has_repeat<T: PartialEq>(toks: &[T], n: usize) -> bool {
    n > 0 && toks.len() >= 3 * n && (0..=toks.len() - 3 * n).any(|i| repeats_at(toks, i, n) >= 3)
}

/// Collapses the first three-fold run, preferring the longest unit and then
/// the leftmost start. Returns false when no run exists.
fn collapse_once<T: PartialEq>(toks: &mut Vec<T>) -> bool {
    for n in (1..=toks.len() / 3).rev() {
        for i in 0..=toks.len() - 3 * n {
            let k = repeats_at(toks, i, n);
            if k >= 3 {
                toks.drain(i + n..i + k * n);
                return true;
            }
        }
    }
    false
}

/// Rule-based repair: collapse repeated n-grams and stutters to a single
/// copy and strip dangling trailing tokens, until nothing changes. The result
/// is the space-joined metric tokens.
pub fn correct_with_rules(text: &str) -> String {
    let mut toks = metric_tokenize(text);
    loop {
        let mut changed = false;
        while collapse_once(&mut toks) {
            changed = true;
        }
        while toks.last().is_some_and(|t| DANGLING.contains(&t.as_str())) {
            toks.pop();
            changed = true;
        }
        if !changed {
            break;
        }
    }
    toks.join(" ")
}
