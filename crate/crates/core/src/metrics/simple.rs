use std::collections::HashMap;

/// `100 · (1 − levenshtein / max_len)` over Unicode scalar values; 100 when both are empty.
pub fn edit_sim(hypothesis: &str, reference: &str) -> f64 {
    let max_len = hypothesis.chars().count().max(reference.chars().count());
    if max_len == 0 {
        return 100.0;
    }
    let d = strsim::levenshtein(hypothesis, reference);
    100.0 * (1.0 - d as f64 / max_len as f64)
}

fn bigrams(s: &str) -> HashMap<(char, char), u64> {
    let chars: Vec<char> = s.chars().collect();
    let mut m = HashMap::new();
    for w in chars.windows(2) {
        *m.entry((w[0], w[1])).or_insert(0) += 1;
    }
    m
}

/// F1 over character-bigram multisets, × 100. When either side is shorter
/// than two characters and so has no bigrams, the score is 100 for equal
/// texts and 0 otherwise.
pub fn bigram_f1(hypothesis: &str, reference: &str) -> f64 {
    let h = bigrams(hypothesis);
    let r = bigrams(reference);
    let nh: u64 = h.values().sum();
    let nr: u64 = r.values().sum();
    if nh == 0 || nr == 0 {
        return if hypothesis == reference { 100.0 } else { 0.0 };
    }
    let overlap: u64 = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    100.0 * 2.0 * overlap as f64 / (nh + nr) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_sim_examples() {
        assert_eq!(edit_sim("abc", "abc"), 100.0);
        assert_eq!(edit_sim("", "ab"), 0.0);
        assert_eq!(edit_sim("", ""), 100.0);
        assert!((edit_sim("kitten", "sitting") - 100.0 * (1.0 - 3.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn bigram_f1_examples() {
        assert_eq!(bigram_f1("abab", "abab"), 100.0);
        assert_eq!(bigram_f1("ab", "cd"), 0.0);
        // {ab, ba, ab} vs {ab, bb, ba}: overlap 2, F1 = 2·2 / 6
        assert!((bigram_f1("abab", "abba") - 100.0 * 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(bigram_f1("a", "a"), 100.0);
        assert_eq!(bigram_f1("a", "ab"), 0.0);
    }
}
