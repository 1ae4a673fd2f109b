//! Synthetic translation corpora.
//!
//! Sources are short strings of lowercase words. The "translation" is a fixed
//! character-level transform of the source, so a small model can learn it and an
//! edit-distance scorer gives a graded quality signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, LangPair, Segment};
use crate::util;

/// Characters that can appear in synthetic sources and references.
pub const SYNTH_ALPHABET: &str = " abcdefghijklmnopqrstuvwxyz";

/// Substitution key: letter `i` of the alphabet maps to `CIPHER_KEY[i]`; space maps to itself.
pub const CIPHER_KEY: &str = "qwertyuiopasdfghjklzxcvbnm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthTask {
    Cipher,
    Reverse,
}

impl std::str::FromStr for SynthTask {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cipher" => Ok(SynthTask::Cipher),
            "reverse" => Ok(SynthTask::Reverse),
            _ => Err(CorpusError::Parameter(format!(
                "unknown task `{s}` (expected cipher|reverse)"
            ))),
        }
    }
}

/// Word-count and word-length ranges (inclusive) for generated sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextShape {
    pub min_words: usize,
    pub max_words: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
}

impl Default for TextShape {
    fn default() -> Self {
        Self {
            min_words: 1,
            max_words: 3,
            min_word_len: 2,
            max_word_len: 4,
        }
    }
}

impl TextShape {
    /// Longest source this shape can produce, in characters.
    pub fn max_chars(&self) -> usize {
        self.max_words * self.max_word_len + self.max_words.saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub task: SynthTask,
    pub n: usize,
    pub noise_rate: f64,
    pub seed: u64,
    /// Segment ids are `{id_prefix}-{index:06}`.
    pub id_prefix: String,
    pub shape: TextShape,
}

/// Applies the exact task transform.
pub fn apply_task(task: SynthTask, source: &str) -> String {
    match task {
        SynthTask::Cipher => source.chars().map(cipher_char).collect(),
        SynthTask::Reverse => source.chars().rev().collect(),
    }
}

fn cipher_char(c: char) -> char {
    if c.is_ascii_lowercase() {
        CIPHER_KEY.as_bytes()[(c as u8 - b'a') as usize] as char
    } else {
        c
    }
}

/// Generates `n` segments with default shape and `seg` id prefix.
pub fn generate_synthetic_corpus(
    task: SynthTask,
    n: usize,
    noise_rate: f64,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    generate_with(&SyntheticCorpusSpec {
        task,
        n,
        noise_rate,
        seed,
        id_prefix: "seg".into(),
        shape: TextShape::default(),
    })
}

pub fn generate_with(spec: &SyntheticCorpusSpec) -> Result<Corpus, CorpusError> {
    if spec.n == 0 {
        return Err(CorpusError::Parameter("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.noise_rate) {
        return Err(CorpusError::Parameter(format!(
            "noise_rate {} outside [0, 1]",
            spec.noise_rate
        )));
    }
    let s = spec.shape;
    if s.min_words == 0
        || s.min_words > s.max_words
        || s.min_word_len == 0
        || s.min_word_len > s.max_word_len
    {
        return Err(CorpusError::Parameter(format!("invalid text shape {s:?}")));
    }

    let alphabet: Vec<char> = SYNTH_ALPHABET.chars().collect();
    let letters = &alphabet[1..];
    let mut rng = util::rng(spec.seed);
    let mut segments = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let n_words = rng.random_range(s.min_words..=s.max_words);
        let mut source = String::new();
        for w in 0..n_words {
            if w > 0 {
                source.push(' ');
            }
            let len = rng.random_range(s.min_word_len..=s.max_word_len);
            for _ in 0..len {
                source.push(letters[rng.random_range(0..letters.len())]);
            }
        }
        let clean = apply_task(spec.task, &source);
        let reference: String = clean
            .chars()
            .map(|c| {
                if spec.noise_rate > 0.0 && rng.random_bool(spec.noise_rate) {
                    // uniform over the alphabet minus the true character
                    let mut r = alphabet[rng.random_range(0..alphabet.len() - 1)];
                    if r == c {
                        r = alphabet[alphabet.len() - 1];
                    }
                    r
                } else {
                    c
                }
            })
            .collect();
        let lang_pair = if i % 2 == 0 {
            LangPair::new("en", "sy")?
        } else {
            LangPair::new("sy", "en")?
        };
        segments.push(Segment::new(
            format!("{}-{i:06}", spec.id_prefix),
            lang_pair,
            source,
            Some(reference),
        )?);
    }
    Corpus::new(segments)
}
