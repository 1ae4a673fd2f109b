//! Character n-gram F-score (chrF) with `n = 6`, `β = 2` and whitespace
//! removed before n-gram extraction.
//!
//! Per order n we count hypothesis n-grams, reference n-grams and clipped
//! matches. Precision and recall are averaged over the orders where both
//! sides have at least one n-gram, then combined into an F-β score.

use std::collections::HashMap;

pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// Per-order `(hyp_total, ref_total, matches)` counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChrfStats {
    pub orders: Vec<[u64; 3]>,
}

impl ChrfStats {
    pub fn add(&mut self, other: &ChrfStats) {
        if self.orders.len() < other.orders.len() {
            self.orders.resize(other.orders.len(), [0; 3]);
        }
        for (a, b) in self.orders.iter_mut().zip(&other.orders) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    pub fn score(&self, beta: f64) -> f64 {
        let (mut p_sum, mut r_sum, mut effective) = (0.0, 0.0, 0usize);
        for &[hyp, reference, matches] in &self.orders {
            if hyp > 0 && reference > 0 {
                p_sum += matches as f64 / hyp as f64;
                r_sum += matches as f64 / reference as f64;
                effective += 1;
            }
        }
        if effective == 0 {
            // nothing to compare on either side: identical only when both are empty
            let both_empty = self.orders.first().is_none_or(|o| o[0] == 0 && o[1] == 0);
            return if both_empty { 100.0 } else { 0.0 };
        }
        let p = p_sum / effective as f64;
        let r = r_sum / effective as f64;
        let b2 = beta * beta;
        let denom = b2 * p + r;
        if denom == 0.0 {
            0.0
        } else {
            100.0 * (1.0 + b2) * p * r / denom
        }
    }
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    let mut m = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

pub fn chrf_stats(hypothesis: &str, reference: &str, order: usize) -> ChrfStats {
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let orders = (1..=order)
        .map(|n| {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            let matches = hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
            [
                h.len().saturating_sub(n - 1) as u64,
                r.len().saturating_sub(n - 1) as u64,
                matches,
            ]
        })
        .collect();
    ChrfStats { orders }
}

pub fn chrf_with(hypothesis: &str, reference: &str, order: usize, beta: f64) -> f64 {
    chrf_stats(hypothesis, reference, order).score(beta)
}

/// Sentence-level chrF in `[0, 100]`.
pub fn chrf(hypothesis: &str, reference: &str) -> f64 {
    chrf_with(hypothesis, reference, CHRF_ORDER, CHRF_BETA)
}

/// Corpus chrF from n-gram counts summed over all `(hypothesis, reference)` pairs.
pub fn chrf_corpus(pairs: &[(&str, &str)]) -> f64 {
    let mut total = ChrfStats {
        orders: vec![[0; 3]; CHRF_ORDER],
    };
    for (h, r) in pairs {
        total.add(&chrf_stats(h, r, CHRF_ORDER));
    }
    total.score(CHRF_BETA)
}
