use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{DecodeState, ToyModel};
use super::ModelError;
use crate::util;

/// Top-p sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    pub top_p: f64,
    pub temperature: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            top_p: 0.6,
            temperature: 0.9,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::Sampling(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ModelError::Sampling(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Renormalized nucleus over output classes, most probable first.
///
/// Logits are divided by `temperature` and softmaxed; classes are sorted by
/// probability (ties by lower class id) and the smallest prefix whose mass
/// reaches `top_p` is kept, including the class that crosses the threshold.
pub fn nucleus_distribution(logits: &[f64], top_p: f64, temperature: f64) -> Vec<(usize, f64)> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut order: Vec<(usize, f64)> = exps.iter().map(|e| e / total).enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut cum = 0.0;
    let mut keep = order.len();
    for (i, &(_, p)) in order.iter().enumerate() {
        cum += p;
        if cum >= top_p {
            keep = i + 1;
            break;
        }
    }
    order.truncate(keep);
    let mass: f64 = order.iter().map(|(_, p)| p).sum();
    for entry in &mut order {
        entry.1 /= mass;
    }
    order
}

fn target_cap(model: &ToyModel, state: &DecodeState, max_len: usize) -> usize {
    // the closing EOS must also fit
    let room = model
        .config()
        .max_len
        .saturating_sub(state.source_len() + 3);
    max_len.min(room)
}

fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

fn run(
    model: &ToyModel,
    mut state: DecodeState,
    max_len: usize,
    mut pick: impl FnMut(&[f64]) -> usize,
) -> String {
    let cap = target_cap(model, &state, max_len);
    let mut out = String::new();
    while state.target_len() < cap {
        let class = pick(state.logits());
        match model.vocab().class_char(class) {
            None => break,
            Some(c) => out.push(c),
        }
        if state.target_len() + 1 >= cap {
            break;
        }
        model.push_class(&mut state, class);
    }
    out
}

/// Argmax decoding (ties go to the lowest token id); stops at EOS or after
/// `max_len` target characters, whichever comes first.
pub fn greedy_decode(model: &ToyModel, source: &str, max_len: usize) -> Result<String, ModelError> {
    let state = model.start_decoding(source)?;
    Ok(run(model, state, max_len, argmax))
}

pub fn sample_top_p(
    model: &ToyModel,
    source: &str,
    params: SamplingParams,
    max_len: usize,
    seed: u64,
) -> Result<String, ModelError> {
    params.validate()?;
    let state = model.start_decoding(source)?;
    Ok(sample_from(model, state, params, max_len, seed))
}

fn sample_from(
    model: &ToyModel,
    state: DecodeState,
    params: SamplingParams,
    max_len: usize,
    seed: u64,
) -> String {
    let mut rng = util::rng(seed);
    run(model, state, max_len, |logits| {
        let nucleus = nucleus_distribution(logits, params.top_p, params.temperature);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for &(class, p) in &nucleus {
            cum += p;
            if u < cum {
                return class;
            }
        }
        nucleus[nucleus.len() - 1].0
    })
}

/// `k` top-p samples; sample `i` (1-based) uses seed `base_seed + i`.
pub fn generate_candidates(
    model: &ToyModel,
    source: &str,
    k: usize,
    params: SamplingParams,
    max_len: usize,
    base_seed: u64,
) -> Result<Vec<String>, ModelError> {
    if k == 0 {
        return Err(ModelError::Sampling("K must be at least 1".into()));
    }
    params.validate()?;
    let prefix = model.start_decoding(source)?;
    Ok((1..=k as u64)
        .map(|i| {
            sample_from(
                model,
                prefix.clone(),
                params,
                max_len,
                base_seed.wrapping_add(i),
            )
        })
        .collect())
}
