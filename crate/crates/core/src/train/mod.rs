//! SFT and CPO objectives, the learning-rate schedule and the training loop.

mod objective;
mod optim;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, PreferenceDataset};
use crate::toymt::{ModelError, ToyModel};
use crate::util;

pub use objective::{
    cpo_loss, loss_gradient, sft_loss, ConstantObjective, CpoObjective, L2Objective, LossBreakdown,
    Objective, SftObjective,
};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: ModelError,
    },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("loss is not finite")]
    NonFinite,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One training example; `rejected` is only used by the preference objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub source: String,
    pub chosen: String,
    pub rejected: Option<String>,
}

impl TrainExample {
    pub fn sft(source: impl Into<String>, chosen: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            chosen: chosen.into(),
            rejected: None,
        }
    }

    pub fn pair(
        source: impl Into<String>,
        chosen: impl Into<String>,
        rejected: impl Into<String>,
    ) -> Self {
        Self {
            source: source.into(),
            chosen: chosen.into(),
            rejected: Some(rejected.into()),
        }
    }
}

/// Preference pairs joined with their sources.
pub fn examples_from_preferences(
    dataset: &PreferenceDataset,
    corpus: &Corpus,
) -> Result<Vec<TrainExample>, TrainError> {
    dataset
        .pairs
        .iter()
        .map(|p| {
            let seg = corpus.get(&p.segment_id).ok_or_else(|| {
                TrainError::Config(format!("pair refers to unknown segment `{}`", p.segment_id))
            })?;
            Ok(TrainExample::pair(
                &seg.source,
                &p.chosen.text,
                &p.rejected.text,
            ))
        })
        .collect()
}

/// (source, reference) examples; segments without a reference are skipped.
pub fn examples_from_references(corpus: &Corpus) -> Vec<TrainExample> {
    corpus
        .segments()
        .iter()
        .filter_map(|s| {
            s.reference
                .as_ref()
                .map(|r| TrainExample::sft(&s.source, r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Sft,
    Cpo,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sft" => Ok(ObjectiveKind::Sft),
            "cpo" => Ok(ObjectiveKind::Cpo),
            _ => Err(TrainError::Config(format!(
                "unknown objective `{s}` (expected sft|cpo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub objective: ObjectiveKind,
    pub beta: f64,
    pub base_lr: f64,
    /// `None` uses `max(10, 1% of total steps)`.
    pub warmup_steps: Option<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveKind::Cpo,
            beta: 0.1,
            base_lr: 1e-4,
            warmup_steps: None,
            batch_size: 128,
            epochs: 1,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(TrainError::Config(format!(
                "beta {} must be finite and >= 0",
                self.beta
            )));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(TrainError::Config(format!(
                "base_lr {} must be positive",
                self.base_lr
            )));
        }
        if self.warmup_steps == Some(0) {
            return Err(TrainError::Config("warmup_steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolved_warmup(&self, total_steps: usize) -> usize {
        self.warmup_steps
            .unwrap_or_else(|| 10.max(total_steps / 100))
    }
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then `base_lr · sqrt(warmup_steps / step)`.
pub fn lr_at(step: usize, base_lr: f64, warmup_steps: usize) -> f64 {
    assert!(warmup_steps >= 1, "warmup_steps must be at least 1");
    if step <= warmup_steps {
        base_lr * step as f64 / warmup_steps as f64
    } else {
        base_lr * (warmup_steps as f64 / step as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub pref_term: f64,
    pub sft_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
    pub warmup_steps: usize,
    /// Examples skipped because they do not fit in the model's max_len.
    pub n_dropped: usize,
    pub checksum: String,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,loss,pref_term,sft_term\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.lr, r.loss, r.pref_term, r.sft_term
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let path = path.as_ref();
        let io = |e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

fn fits(model: &ToyModel, ex: &TrainExample) -> Result<bool, ModelError> {
    let check = |t: &str| match model.encode(&ex.source, t) {
        Ok(_) => Ok(true),
        Err(ModelError::TooLong { .. }) => Ok(false),
        Err(e) => Err(e),
    };
    Ok(check(&ex.chosen)? && ex.rejected.as_deref().map_or(Ok(true), check)?)
}

/// Runs `epochs` passes of seeded-shuffled mini-batches, one optimizer step
/// per batch, and returns the per-step log.
pub fn train(
    model: &mut ToyModel,
    examples: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.objective == ObjectiveKind::Cpo {
        if let Some(i) = examples.iter().position(|e| e.rejected.is_none()) {
            return Err(TrainError::Config(format!(
                "example {i} has no rejected text for the preference objective"
            )));
        }
    }
    let mut usable = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        if fits(model, ex).map_err(|source| TrainError::Sample { index: i, source })? {
            usable.push(ex.clone());
        }
    }
    let n_dropped = examples.len() - usable.len();
    if usable.is_empty() && cfg.epochs > 0 {
        return Err(TrainError::EmptyDataset);
    }

    let steps_per_epoch = usable.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup = cfg.resolved_warmup(total_steps);
    let mut optimizer = Optimizer::new(cfg.optimizer, model.n_params());
    let mut rng = util::rng(cfg.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut grad = vec![0.0; model.n_params()];
    let mut records = Vec::with_capacity(total_steps);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch: Vec<TrainExample> = chunk.iter().map(|&i| usable[i].clone()).collect();
            grad.fill(0.0);
            let loss = match cfg.objective {
                ObjectiveKind::Sft => {
                    SftObjective { batch: &batch }.evaluate(model, Some(&mut grad))
                }
                ObjectiveKind::Cpo => CpoObjective {
                    batch: &batch,
                    beta: cfg.beta,
                }
                .evaluate(model, Some(&mut grad)),
            }?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss { step });
            }
            let lr = lr_at(step, cfg.base_lr, warmup);
            optimizer.step(model.params_mut(), &grad, lr);
            records.push(StepRecord {
                step,
                lr,
                loss: loss.total,
                pref_term: loss.pref_term,
                sft_term: loss.sft_term,
            });
        }
    }
    Ok(TrainLog {
        records,
        warmup_steps: warmup,
        n_dropped,
        checksum: model.checksum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_at(0, 1e-4, 10), 0.0);
        assert_eq!(lr_at(10, 1e-4, 10), 1e-4);
        assert!((lr_at(40, 1e-4, 10) - 5e-5).abs() < 1e-20);
        for s in 11..200 {
            assert!(lr_at(s + 1, 1.0, 10) < lr_at(s, 1.0, 10));
        }
    }

    #[test]
    fn default_warmup() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.resolved_warmup(100), 10);
        assert_eq!(cfg.resolved_warmup(5000), 50);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            beta: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            base_lr: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            warmup_steps: Some(0),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
