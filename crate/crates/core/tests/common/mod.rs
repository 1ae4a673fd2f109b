//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use prefalign::toymt::{ModelConfig, ToyModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small model whose parameters (including the zero-initialised output
/// head) are all randomised, so every gradient coordinate is exercised.
pub fn random_tiny_model(
    seed: u64,
    chars: &str,
    dim: usize,
    layers: usize,
    heads: usize,
    max_len: usize,
) -> ToyModel {
    let cfg = ModelConfig {
        chars: chars.into(),
        dim,
        n_layers: layers,
        n_heads: heads,
        max_len,
        seed,
    };
    let mut model = ToyModel::init(cfg).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for p in model.params_mut() {
        *p += r.random_range(-0.5..0.5);
    }
    model
}

/// Central finite differences of `f` at `params`.
pub fn fd_gradient(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Max over coordinates of `|a − b| / max(|a|, |b|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Chain-rule log-probability built from per-step next-token distributions
/// of the incremental decoder.
pub fn chain_rule_logprob(model: &ToyModel, source: &str, target: &str) -> f64 {
    let mut state = model.start_decoding(source).unwrap();
    let mut total = 0.0;
    for c in target.chars() {
        let class = model
            .vocab()
            .class_of_token(model.vocab().char_id(c).unwrap())
            .unwrap();
        total += log_softmax(state.logits())[class];
        model.push_class(&mut state, class);
    }
    total + log_softmax(state.logits())[0]
}

/// Levenshtein distance by the textbook full DP table.
pub fn levenshtein_dp(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in t[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

/// Random text of 0..=max_len characters over `alphabet`.
pub fn random_text(r: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> String {
    let n = r.random_range(0..=max_len);
    (0..n)
        .map(|_| alphabet[r.random_range(0..alphabet.len())])
        .collect()
}

/// Clipped matches by greedy one-to-one pairing of equal n-grams: each
/// hypothesis n-gram claims the first unclaimed equal reference n-gram.
fn matched_ngrams<T: PartialEq>(h: &[T], r: &[T], n: usize) -> (u64, u64, u64) {
    let hg: Vec<&[T]> = if h.len() >= n {
        (0..=h.len() - n).map(|i| &h[i..i + n]).collect()
    } else {
        vec![]
    };
    let rg: Vec<&[T]> = if r.len() >= n {
        (0..=r.len() - n).map(|i| &r[i..i + n]).collect()
    } else {
        vec![]
    };
    let mut used = vec![false; rg.len()];
    let mut m = 0;
    for g in &hg {
        if let Some(j) = (0..rg.len()).find(|&j| !used[j] && rg[j] == *g) {
            used[j] = true;
            m += 1;
        }
    }
    (hg.len() as u64, rg.len() as u64, m)
}

fn chrf_from_counts(counts: &[(u64, u64, u64)]) -> f64 {
    let eff: Vec<&(u64, u64, u64)> = counts.iter().filter(|c| c.0 > 0 && c.1 > 0).collect();
    if eff.is_empty() {
        return if counts[0].0 == 0 && counts[0].1 == 0 {
            100.0
        } else {
            0.0
        };
    }
    let p = eff.iter().map(|c| c.2 as f64 / c.0 as f64).sum::<f64>() / eff.len() as f64;
    let r = eff.iter().map(|c| c.2 as f64 / c.1 as f64).sum::<f64>() / eff.len() as f64;
    if p + r == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

fn chrf_counts(h: &str, r: &str) -> Vec<(u64, u64, u64)> {
    let h: Vec<char> = h.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = r.chars().filter(|c| !c.is_whitespace()).collect();
    (1..=6).map(|n| matched_ngrams(&h, &r, n)).collect()
}

/// chrF (n = 6, β = 2) from pairwise-matched character n-grams.
pub fn chrf_oracle(h: &str, r: &str) -> f64 {
    chrf_from_counts(&chrf_counts(h, r))
}

pub fn chrf_corpus_oracle(pairs: &[(String, String)]) -> f64 {
    let mut tot = vec![(0, 0, 0); 6];
    for (h, r) in pairs {
        for (t, c) in tot.iter_mut().zip(chrf_counts(h, r)) {
            *t = (t.0 + c.0, t.1 + c.1, t.2 + c.2);
        }
    }
    chrf_from_counts(&tot)
}

/// `(matches, totals, hyp_len, ref_len)` over whitespace tokens.
fn bleu_counts(h: &str, r: &str) -> ([u64; 4], [u64; 4], u64, u64) {
    let ht: Vec<&str> = h.split_whitespace().collect();
    let rt: Vec<&str> = r.split_whitespace().collect();
    let (mut m, mut t) = ([0; 4], [0; 4]);
    for n in 1..=4 {
        let (hn, _, mn) = matched_ngrams(&ht, &rt, n);
        m[n - 1] = mn;
        t[n - 1] = hn;
    }
    (m, t, ht.len() as u64, rt.len() as u64)
}

fn bleu_from_counts(m: [u64; 4], t: [u64; 4], hl: u64, rl: u64, smooth: bool) -> f64 {
    if hl == 0 {
        return if rl == 0 { 100.0 } else { 0.0 };
    }
    if m[0] == 0 {
        return 0.0;
    }
    let mut logs = Vec::new();
    for n in 0..4 {
        if t[n] == 0 {
            continue;
        }
        let add = if smooth && n > 0 { 1 } else { 0 };
        let (mm, tt) = (m[n] + add, t[n] + add);
        if mm == 0 {
            return 0.0;
        }
        logs.push((mm as f64 / tt as f64).ln());
    }
    let bp = if hl >= rl {
        1.0
    } else {
        (1.0 - rl as f64 / hl as f64).exp()
    };
    100.0 * bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

/// Sentence BLEU with add-one smoothing above unigrams.
pub fn sentence_bleu_oracle(h: &str, r: &str) -> f64 {
    let (m, t, hl, rl) = bleu_counts(h, r);
    bleu_from_counts(m, t, hl, rl, true)
}

pub fn corpus_bleu_oracle(pairs: &[(String, String)]) -> f64 {
    let (mut m, mut t, mut hl, mut rl) = ([0; 4], [0; 4], 0, 0);
    for (h, r) in pairs {
        let (a, b, c, d) = bleu_counts(h, r);
        for n in 0..4 {
            m[n] += a[n];
            t[n] += b[n];
        }
        hl += c;
        rl += d;
    }
    bleu_from_counts(m, t, hl, rl, false)
}

/// `100 · (1 − d / max_len)` with the DP edit distance.
pub fn edit_sim_oracle(h: &str, r: &str) -> f64 {
    let l = h.chars().count().max(r.chars().count());
    if l == 0 {
        100.0
    } else {
        100.0 * (1.0 - levenshtein_dp(h, r) as f64 / l as f64)
    }
}

/// `(hypothesis, reference)` pairs of length 0..=40 over a shared small alphabet with spaces.
pub fn random_metric_pairs(seed: u64, n: usize) -> Vec<(String, String)> {
    let alphabet: Vec<char> = "abcd  ".chars().collect();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            (
                random_text(&mut r, &alphabet, 40),
                random_text(&mut r, &alphabet, 40),
            )
        })
        .collect()
}

/// Upper tail `P(T > t)` of Student's t by composite Simpson integration of the density.
pub fn t_upper_tail_quadrature(t: f64, df: f64) -> f64 {
    let ln_c =
        ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    // P(0 < T < |t|) on a fine grid; the tail follows from symmetry
    let a = t.abs();
    let n = 20_000;
    let h = a / n as f64;
    let mut s = pdf(0.0) + pdf(a);
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let mass = s * h / 3.0;
    if t >= 0.0 {
        0.5 - mass
    } else {
        0.5 + mass
    }
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Straight from the definition: sort ascending, locate the base rank by
/// counting strictly lower samples, step `o_c - 1` up and `o_r` down, clamp.
pub fn mono_oracle(samples: &[f64], base: f64, o_r: usize, o_c: usize) -> Option<(f64, f64)> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() as i64;
    let b = 1 + s.iter().filter(|x| **x < base).count() as i64;
    let c = (b + o_c as i64 - 1).clamp(1, k);
    let r = (b - o_r as i64).clamp(1, k);
    let (sc, sr) = (s[c as usize - 1], s[r as usize - 1]);
    (sr < base && base < sc).then_some((sc, sr))
}
