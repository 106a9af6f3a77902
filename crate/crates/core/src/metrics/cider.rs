use std::collections::HashMap;

use super::metric_tokenize;

pub const CIDER_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;

type Counts = HashMap<Vec<String>, f64>;

fn ngram_counts(toks: &[String], n: usize) -> Counts {
    let mut c = Counts::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *c.entry(w.to_vec()).or_default() += 1.0;
        }
    }
    c
}

/// One caption's per-order tf-idf vectors.
struct Vectors {
    vec: Vec<Counts>,
    norm: Vec<f64>,
    len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CiderResult {
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Set when the corpus has a single item, where every idf is zero.
    pub single_item: bool,
}

/// CIDEr-D over a corpus of `(candidate, references)` pairs.
///
/// Document frequencies count reference sets; the candidate's tf-idf values
/// are clipped per reference by the reference's own values; each order's
/// cosine is multiplied by a Gaussian length penalty and averaged over
/// orders and references, then scaled by 10.
pub fn cider_d<C: AsRef<str>, R: AsRef<str>>(items: &[(C, Vec<R>)], n_max: usize, sigma: f64) -> CiderResult {
    let n_items = items.len();
    let cands: Vec<Vec<String>> = items.iter().map(|(c, _)| metric_tokenize(c.as_ref())).collect();
    let refs: Vec<Vec<Vec<String>>> = items
        .iter()
        .map(|(_, rs)| rs.iter().map(|r| metric_tokenize(r.as_ref())).collect())
        .collect();

    let mut df: HashMap<Vec<String>, f64> = HashMap::new();
    for rs in &refs {
        let mut seen = std::collections::HashSet::new();
        for r in rs {
            for n in 1..=n_max {
                for g in ngram_counts(r, n).into_keys() {
                    seen.insert(g);
                }
            }
        }
        for g in seen {
            *df.entry(g).or_default() += 1.0;
        }
    }
    let log_n = (n_items.max(1) as f64).ln();
    let vectors = |toks: &[String]| -> Vectors {
        let mut vec = Vec::with_capacity(n_max);
        let mut norm = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let mut v = ngram_counts(toks, n);
            let mut sq = 0.0;
            for (g, tf) in v.iter_mut() {
                let d = df.get(g).copied().unwrap_or(0.0).max(1.0);
                *tf *= log_n - d.ln();
                sq += *tf * *tf;
            }
            vec.push(v);
            norm.push(sq.sqrt());
        }
        Vectors { vec, norm, len: toks.len() }
    };
    let sim = |h: &Vectors, r: &Vectors| -> f64 {
        let delta = h.len as f64 - r.len as f64;
        let penalty = (-(delta * delta) / (2.0 * sigma * sigma)).exp();
        let mut total = 0.0;
        for n in 0..n_max {
            let mut val: f64 = 0.0;
            for (g, &hv) in &h.vec[n] {
                if let Some(&rv) = r.vec[n].get(g) {
                    val += hv.min(rv) * rv;
                }
            }
            if h.norm[n] != 0.0 && r.norm[n] != 0.0 {
                val /= h.norm[n] * r.norm[n];
            } else {
                val = 0.0;
            }
            total += val * penalty;
        }
        total / n_max as f64
    };

    let scores: Vec<f64> = cands
        .iter()
        .zip(&refs)
        .map(|(c, rs)| {
            if rs.is_empty() {
                return 0.0;
            }
            let hv = vectors(c);
            let s: f64 = rs.iter().map(|r| sim(&hv, &vectors(r))).sum();
            10.0 * s / rs.len() as f64
        })
        .collect();
    let mean = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
    CiderResult {
        scores,
        mean,
        single_item: n_items == 1,
    }
}
