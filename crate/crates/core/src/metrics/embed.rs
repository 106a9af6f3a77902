use std::collections::HashMap;

use super::metric_tokenize;

/// Maps sentences to vectors compared by cosine similarity.
pub trait SentenceEmbedder {
    fn name(&self) -> &str;
    fn embed(&self, sentence: &str) -> Vec<f64>;
}

/// Unigram tf-idf embedding over a fixed vocabulary, standing in for a
/// learned sentence encoder.
pub struct TfIdfEmbedder {
    vocab: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfEmbedder {
    /// Fits idf over `documents`, one per item (all its sentences pooled).
    pub fn fit<'a>(documents: impl IntoIterator<Item = Vec<&'a str>>) -> Self {
        let mut vocab = HashMap::new();
        let mut df: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for doc in documents {
            n += 1;
            let mut seen = std::collections::HashSet::new();
            for s in doc {
                for t in metric_tokenize(s) {
                    seen.insert(t);
                }
            }
            for t in seen {
                let next = vocab.len();
                let id = *vocab.entry(t).or_insert(next);
                if id == df.len() {
                    df.push(0.0);
                }
                df[id] += 1.0;
            }
        }
        let idf = df.iter().map(|d| ((1.0 + n as f64) / (1.0 + d)).ln() + 1.0).collect();
        Self { vocab, idf }
    }
}

impl SentenceEmbedder for TfIdfEmbedder {
    fn name(&self) -> &str {
        "tfidf"
    }

    fn embed(&self, sentence: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.idf.len()];
        for t in metric_tokenize(sentence) {
            if let Some(&i) = self.vocab.get(&t) {
                v[i] += self.idf[i];
            }
        }
        v
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine between the candidate and each reference.
pub fn similarity<R: AsRef<str>>(e: &dyn SentenceEmbedder, candidate: &str, references: &[R]) -> f64 {
    if references.is_empty() {
        return 0.0;
    }
    let c = e.embed(candidate);
    references.iter().map(|r| cosine(&c, &e.embed(r.as_ref()))).sum::<f64>() / references.len() as f64
}
