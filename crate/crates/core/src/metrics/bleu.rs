//! BLEU over whitespace tokens with up to 4-gram precisions.
//!
//! Only orders for which the hypothesis has at least one n-gram take part in
//! the geometric mean. Sentence BLEU adds one to the numerator and denominator
//! of every precision above unigrams; corpus BLEU sums clipped counts over
//! segments and applies no smoothing.

use std::collections::HashMap;

use super::{references, MetricError, ScoreRequest};

pub const BLEU_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BleuMode {
    /// Mean of smoothed sentence BLEU scores.
    Sentence,
    /// Single score from counts aggregated over all segments.
    Corpus,
}

/// Clipped matches and hypothesis totals per order, plus lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: [u64; BLEU_MAX_ORDER],
    pub totals: [u64; BLEU_MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn new(hypothesis: &str, reference: &str) -> Self {
        let h: Vec<&str> = hypothesis.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        let mut s = BleuStats {
            hyp_len: h.len() as u64,
            ref_len: r.len() as u64,
            ..Default::default()
        };
        for n in 1..=BLEU_MAX_ORDER {
            if h.len() < n {
                continue;
            }
            let mut ref_counts: HashMap<&[&str], u64> = HashMap::new();
            if r.len() >= n {
                for w in r.windows(n) {
                    *ref_counts.entry(w).or_insert(0) += 1;
                }
            }
            let mut hyp_counts: HashMap<&[&str], u64> = HashMap::new();
            for w in h.windows(n) {
                *hyp_counts.entry(w).or_insert(0) += 1;
            }
            s.totals[n - 1] = (h.len() + 1 - n) as u64;
            s.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..BLEU_MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn score(&self, smooth: bool) -> f64 {
        if self.hyp_len == 0 {
            return if self.ref_len == 0 { 100.0 } else { 0.0 };
        }
        if self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut effective = 0;
        for n in 0..BLEU_MAX_ORDER {
            if self.totals[n] == 0 {
                continue;
            }
            let (m, t) = if smooth && n > 0 {
                (self.matches[n] + 1, self.totals[n] + 1)
            } else {
                (self.matches[n], self.totals[n])
            };
            if m == 0 {
                return 0.0;
            }
            log_sum += (m as f64 / t as f64).ln();
            effective += 1;
        }
        let bp = if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        100.0 * bp * (log_sum / effective as f64).exp()
    }
}

/// Smoothed sentence BLEU in `[0, 100]`.
pub fn sentence_bleu(hypothesis: &str, reference: &str) -> f64 {
    BleuStats::new(hypothesis, reference).score(true)
}

/// Unsmoothed BLEU from counts summed over all pairs.
pub fn corpus_bleu(pairs: &[(&str, &str)]) -> f64 {
    let mut total = BleuStats::default();
    for (h, r) in pairs {
        total.add(&BleuStats::new(h, r));
    }
    total.score(false)
}

pub fn bleu(requests: &[ScoreRequest], mode: BleuMode) -> Result<f64, MetricError> {
    let refs = references("bleu", requests)?;
    let pairs: Vec<(&str, &str)> = requests
        .iter()
        .zip(refs)
        .map(|(r, x)| (r.hypothesis.as_str(), x))
        .collect();
    Ok(match mode {
        BleuMode::Corpus => corpus_bleu(&pairs),
        BleuMode::Sentence if pairs.is_empty() => 0.0,
        BleuMode::Sentence => {
            pairs.iter().map(|(h, r)| sentence_bleu(h, r)).sum::<f64>() / pairs.len() as f64
        }
    })
}
