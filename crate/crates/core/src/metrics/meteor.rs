use std::collections::HashMap;

use super::metric_tokenize;

/// Search budget for exact chunk minimization before falling back to a
/// greedy alignment.
const SEARCH_LIMIT: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Exact-match alignment with the maximum number of matches and, among
/// those, the fewest chunks.
pub fn align(cand: &[String], reference: &[String]) -> Alignment {
    let mut cc: HashMap<&str, usize> = HashMap::new();
    let mut rc: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        *cc.entry(w).or_default() += 1;
    }
    for w in reference {
        *rc.entry(w).or_default() += 1;
    }
    let matches: usize = cc.iter().map(|(w, &c)| c.min(rc.get(w).copied().unwrap_or(0))).sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    let chunks = if reference.len() <= 64 {
        let mut s = Search {
            cand,
            reference,
            surplus: cc.iter().map(|(w, &c)| (*w, c - c.min(rc.get(w).copied().unwrap_or(0)))).collect(),
            memo: HashMap::new(),
            visited: 0,
        };
        s.best(0, 0, None, &mut HashMap::new())
    } else {
        None
    };
    Alignment {
        matches,
        chunks: chunks.unwrap_or_else(|| greedy_chunks(cand, reference)),
    }
}

struct Search<'a> {
    cand: &'a [String],
    reference: &'a [String],
    /// Candidate occurrences of each word that may stay unmatched.
    surplus: HashMap<&'a str, usize>,
    memo: HashMap<(usize, u64, Option<usize>), Option<usize>>,
    visited: usize,
}

impl<'a> Search<'a> {
    /// Fewest chunks for `cand[i..]` given used reference positions and the
    /// reference position matched by `cand[i-1]`. `None` when the budget is
    /// exhausted.
    fn best(&mut self, i: usize, used: u64, prev: Option<usize>, skipped: &mut HashMap<&'a str, usize>) -> Option<usize> {
        if i == self.cand.len() {
            return Some(0);
        }
        let key = (i, used, prev);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        self.visited += 1;
        if self.visited > SEARCH_LIMIT {
            return None;
        }
        let w = self.cand[i].as_str();
        let mut best = usize::MAX;
        for j in 0..self.reference.len() {
            if used & (1 << j) == 0 && self.reference[j] == w {
                let cont = prev.is_some_and(|p| p + 1 == j);
                let rest = self.best(i + 1, used | (1 << j), Some(j), skipped)?;
                best = best.min(rest.saturating_add(usize::from(!cont)));
            }
        }
        let allowance = self.surplus.get(w).copied().unwrap_or(0);
        let done = skipped.get(w).copied().unwrap_or(0);
        if done < allowance {
            *skipped.entry(w).or_default() += 1;
            let rest = self.best(i + 1, used, None, skipped);
            *skipped.get_mut(w).unwrap() -= 1;
            best = best.min(rest?);
        }
        // Skip counts are a function of (i, used), so memoizing on them is sound.
        self.memo.insert(key, Some(best));
        Some(best)
    }
}

/// Leftmost-unused greedy alignment.
fn greedy_chunks(cand: &[String], reference: &[String]) -> usize {
    let mut used = vec![false; reference.len()];
    let mut prev: Option<usize> = None;
    let mut chunks = 0;
    let mut remaining: HashMap<&str, usize> = HashMap::new();
    for w in reference {
        *remaining.entry(w).or_default() += 1;
    }
    for w in cand {
        let avail = remaining.get_mut(w.as_str()).filter(|r| **r > 0);
        let Some(avail) = avail else {
            prev = None;
            continue;
        };
        let next = prev
            .map(|p| p + 1)
            .filter(|&j| j < reference.len() && !used[j] && reference[j] == *w)
            .or_else(|| (0..reference.len()).find(|&j| !used[j] && reference[j] == *w));
        let j = next.expect("available match");
        *avail -= 1;
        used[j] = true;
        if prev.is_none_or(|p| p + 1 != j) {
            chunks += 1;
        }
        prev = Some(j);
    }
    chunks
}

fn score_single(cand: &[String], reference: &[String]) -> f64 {
    let a = align(cand, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    f * (1.0 - penalty)
}

/// Exact-match METEOR: maximum over references.
pub fn meteor_lite<R: AsRef<str>>(candidate: &str, references: &[R]) -> f64 {
    let c = metric_tokenize(candidate);
    references
        .iter()
        .map(|r| score_single(&c, &metric_tokenize(r.as_ref())))
        .fold(0.0, f64::max)
}
