//! Caption metrics and corpus reports.

mod cider;
mod embed;
mod meteor;
mod spider;
mod tokenize;

pub use cider::{cider_d, CiderResult, CIDER_N, CIDER_SIGMA};
pub use embed::{cosine, similarity, SentenceEmbedder, TfIdfEmbedder};
pub use meteor::{align, meteor_lite, Alignment};
pub use spider::{spider, spider_fl, FluencyPenalty, PenaltyMode};
pub use tokenize::metric_tokenize;

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fluency::{ErrorDetector, Rule};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("item {0} has no references")]
    NoReferences(String),
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub candidate: String,
    pub references: Vec<String>,
}

/// Where a corpus value came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MetricValue {
    Computed { value: f64 },
    Supplied { value: f64 },
    Absent { reason: String },
}

impl MetricValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Computed { value } | Self::Supplied { value } => Some(*value),
            Self::Absent { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub candidate: String,
    pub references: Vec<String>,
    pub cider_d: f64,
    pub meteor_lite: f64,
    pub spice: Option<f64>,
    pub spider: Option<f64>,
    pub spider_fl: Option<f64>,
    pub sbert_proxy: f64,
    pub fense_proxy: f64,
    pub fluency_prob: f64,
    pub triggered_rules: Vec<Rule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Corpus means ×100, rounded to one decimal.
    pub corpus: IndexMap<String, MetricValue>,
    /// Per-item scores in natural scale.
    pub items: Vec<ScoredItem>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub penalty: FluencyPenalty,
}

/// `round(raw × 100, 1)`
pub fn scale_report_value(raw: f64) -> f64 {
    (raw * 1000.0).round() / 10.0
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn evaluate_corpus(
    items: &[EvalItem],
    detector: &dyn ErrorDetector,
    spice: Option<&IndexMap<String, f64>>,
    cfg: &MetricsConfig,
) -> Result<MetricReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut ids = HashSet::new();
    for it in items {
        if !ids.insert(it.id.as_str()) {
            return Err(MetricsError::DuplicateId(it.id.clone()));
        }
        if it.references.is_empty() {
            return Err(MetricsError::NoReferences(it.id.clone()));
        }
    }
    if let Some(sp) = spice {
        if let Some(missing) = items.iter().find(|it| !sp.contains_key(&it.id)) {
            return Err(MetricsError::IdMismatch(format!("no SPICE score for {}", missing.id)));
        }
        if let Some(extra) = sp.keys().find(|k| !ids.contains(k.as_str())) {
            return Err(MetricsError::IdMismatch(format!("SPICE score for unknown item {extra}")));
        }
    }
    let mut warnings = Vec::new();
    let pairs: Vec<(&str, Vec<&str>)> = items
        .iter()
        .map(|it| (it.candidate.as_str(), it.references.iter().map(String::as_str).collect()))
        .collect();
    let cider = cider_d(&pairs, CIDER_N, CIDER_SIGMA);
    if cider.single_item {
        warnings.push("single-item corpus: CIDEr-D idf is zero for every n-gram".to_string());
    }
    let embedder = TfIdfEmbedder::fit(items.iter().map(|it| it.references.iter().map(String::as_str).collect()));

    let scored: Vec<ScoredItem> = items
        .iter()
        .zip(&cider.scores)
        .map(|(it, &c)| {
            let a = detector.assess(&it.candidate);
            let sp = spice.map(|s| s[&it.id]);
            let spd = sp.map(|s| spider(c, s));
            let sim = similarity(&embedder, &it.candidate, &it.references);
            ScoredItem {
                id: it.id.clone(),
                candidate: it.candidate.clone(),
                references: it.references.clone(),
                cider_d: c,
                meteor_lite: meteor_lite(&it.candidate, &it.references),
                spice: sp,
                spider: spd,
                spider_fl: spd.map(|s| spider_fl(s, a.probability, &cfg.penalty)),
                sbert_proxy: sim,
                fense_proxy: cfg.penalty.apply(sim, a.probability),
                fluency_prob: a.probability,
                triggered_rules: a.triggered_rules,
            }
        })
        .collect();

    let computed = |f: fn(&ScoredItem) -> f64| MetricValue::Computed {
        value: scale_report_value(mean(scored.iter().map(f))),
    };
    let mut corpus = IndexMap::new();
    corpus.insert("cider_d".into(), computed(|s| s.cider_d));
    corpus.insert("meteor_lite".into(), computed(|s| s.meteor_lite));
    if spice.is_some() {
        corpus.insert(
            "spice".into(),
            MetricValue::Supplied {
                value: scale_report_value(mean(scored.iter().filter_map(|s| s.spice))),
            },
        );
        corpus.insert("spider".into(), computed(|s| s.spider.unwrap_or_default()));
        corpus.insert("spider_fl".into(), computed(|s| s.spider_fl.unwrap_or_default()));
    } else {
        let reason = "no SPICE scores supplied".to_string();
        for k in ["spice", "spider", "spider_fl"] {
            corpus.insert(k.into(), MetricValue::Absent { reason: reason.clone() });
        }
    }
    corpus.insert("sbert_proxy".into(), computed(|s| s.sbert_proxy));
    corpus.insert("fense_proxy".into(), computed(|s| s.fense_proxy));
    let threshold = cfg.penalty.threshold;
    corpus.insert(
        "fluency_error_rate".into(),
        MetricValue::Computed {
            value: scale_report_value(mean(scored.iter().map(|s| f64::from(u8::from(s.fluency_prob > threshold))))),
        },
    );
    Ok(MetricReport {
        corpus,
        items: scored,
        warnings,
    })
}

fn jsonl_objects(text: &str) -> impl Iterator<Item = Result<(usize, serde_json::Map<String, Value>), MetricsError>> + '_ {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| {
        let line = i + 1;
        match serde_json::from_str::<Value>(l) {
            Ok(Value::Object(m)) => Ok((line, m)),
            Ok(_) => Err(MetricsError::MalformedLine {
                line,
                message: "expected a JSON object".into(),
            }),
            Err(e) => Err(MetricsError::MalformedLine {
                line,
                message: e.to_string(),
            }),
        }
    })
}

fn field_str(m: &serde_json::Map<String, Value>, key: &str, line: usize) -> Result<String, MetricsError> {
    m.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| MetricsError::MalformedLine {
            line,
            message: format!("missing string field {key:?}"),
        })
}

fn check_unique(seen: &mut HashSet<String>, id: &str) -> Result<(), MetricsError> {
    if seen.insert(id.to_string()) {
        Ok(())
    } else {
        Err(MetricsError::DuplicateId(id.to_string()))
    }
}

/// SPICE sidecar: one `{"id": string, "spice": number}` per line.
pub fn parse_spice(text: &str) -> Result<IndexMap<String, f64>, MetricsError> {
    let mut out = IndexMap::new();
    let mut seen = HashSet::new();
    for obj in jsonl_objects(text) {
        let (line, m) = obj?;
        let id = field_str(&m, "id", line)?;
        let v = m
            .get("spice")
            .and_then(Value::as_f64)
            .filter(|v| v.is_finite())
            .ok_or_else(|| MetricsError::MalformedLine {
                line,
                message: "missing finite number field \"spice\"".into(),
            })?;
        check_unique(&mut seen, &id)?;
        out.insert(id, v);
    }
    Ok(out)
}

/// Candidates: one `{"id", "caption"}` per line.
pub fn parse_candidates(text: &str) -> Result<IndexMap<String, String>, MetricsError> {
    let mut out = IndexMap::new();
    let mut seen = HashSet::new();
    for obj in jsonl_objects(text) {
        let (line, m) = obj?;
        let id = field_str(&m, "id", line)?;
        let caption = field_str(&m, "caption", line)?;
        check_unique(&mut seen, &id)?;
        out.insert(id, caption);
    }
    Ok(out)
}

/// References: one `{"id", "captions": [..]}` per line.
pub fn parse_references(text: &str) -> Result<IndexMap<String, Vec<String>>, MetricsError> {
    let mut out = IndexMap::new();
    let mut seen = HashSet::new();
    for obj in jsonl_objects(text) {
        let (line, m) = obj?;
        let id = field_str(&m, "id", line)?;
        let caps = m
            .get("captions")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(|v| v.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
            .filter(|c| !c.is_empty())
            .ok_or_else(|| MetricsError::MalformedLine {
                line,
                message: "\"captions\" must be a non-empty list of strings".into(),
            })?;
        check_unique(&mut seen, &id)?;
        out.insert(id, caps);
    }
    Ok(out)
}

/// Pairs candidates with references in reference order.
pub fn join_items(
    candidates: &IndexMap<String, String>,
    references: &IndexMap<String, Vec<String>>,
) -> Result<Vec<EvalItem>, MetricsError> {
    if let Some(extra) = candidates.keys().find(|k| !references.contains_key(*k)) {
        return Err(MetricsError::IdMismatch(format!("candidate {extra} has no references")));
    }
    references
        .iter()
        .map(|(id, refs)| {
            let c = candidates
                .get(id)
                .ok_or_else(|| MetricsError::IdMismatch(format!("no candidate for {id}")))?;
            Ok(EvalItem {
                id: id.clone(),
                candidate: c.clone(),
                references: refs.clone(),
            })
        })
        .collect()
}
