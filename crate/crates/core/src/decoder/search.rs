//! Caption search over a next-token log-probability function.

use std::cmp::Ordering;

use super::vocab::EOS;

/// First index of the maximum; NaN never wins.
pub fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] || xs[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Greedy decoding. `step` maps the caption so far to next-token log-probs.
/// The returned ids exclude `<eos>`.
pub fn greedy<E>(
    max_len: usize,
    mut step: impl FnMut(&[usize]) -> Result<Vec<f64>, E>,
) -> Result<Vec<usize>, E> {
    let mut ids = Vec::new();
    while ids.len() < max_len {
        let lp = step(&ids)?;
        let t = argmax_lowest(&lp);
        if t == EOS {
            break;
        }
        ids.push(t);
    }
    Ok(ids)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated ids, including a final `<eos>` when finished.
    pub ids: Vec<usize>,
    pub log_prob: f64,
}

impl Hypothesis {
    pub fn score(&self, length_exponent: f64) -> f64 {
        if self.ids.is_empty() {
            return self.log_prob;
        }
        self.log_prob / (self.ids.len() as f64).powf(length_exponent)
    }

    /// Caption ids without the closing `<eos>`.
    pub fn caption(&self) -> &[usize] {
        match self.ids.last() {
            Some(&EOS) => &self.ids[..self.ids.len() - 1],
            _ => &self.ids,
        }
    }
}

fn rank(a: &Hypothesis, b: &Hypothesis, alpha: f64) -> Ordering {
    b.score(alpha)
        .partial_cmp(&a.score(alpha))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.ids.cmp(&b.ids))
}

/// Beam search scored by `sum log p / len^length_exponent`. Hypotheses that
/// emit `<eos>` retire; search ends when no live hypothesis remains, the
/// length limit is hit, or `beam` hypotheses have finished and the best of
/// them outranks every live one.
pub fn beam_search<E>(
    beam: usize,
    max_len: usize,
    length_exponent: f64,
    mut step: impl FnMut(&[usize]) -> Result<Vec<f64>, E>,
) -> Result<Hypothesis, E> {
    let beam = beam.max(1);
    let mut live = vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let mut cands = Vec::new();
        for h in &live {
            let lp = step(&h.ids)?;
            for (t, &l) in lp.iter().enumerate() {
                if l.is_finite() {
                    let mut ids = h.ids.clone();
                    ids.push(t);
                    cands.push(Hypothesis {
                        ids,
                        log_prob: h.log_prob + l,
                    });
                }
            }
        }
        cands.sort_by(|a, b| rank(a, b, length_exponent));
        live.clear();
        for (i, c) in cands.into_iter().enumerate() {
            if c.ids.last() == Some(&EOS) {
                if i < beam {
                    finished.push(c);
                }
            } else if live.len() < beam {
                live.push(c);
            }
        }
        finished.sort_by(|a, b| rank(a, b, length_exponent));
        if live.is_empty() {
            break;
        }
        if finished.len() >= beam && rank(&finished[0], &live[0], length_exponent) == Ordering::Less {
            break;
        }
    }
    finished.extend(live);
    finished.sort_by(|a, b| rank(a, b, length_exponent));
    Ok(finished.into_iter().next().unwrap_or(Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
    }))
}
