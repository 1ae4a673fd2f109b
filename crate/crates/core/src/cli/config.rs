use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::corpus::{SynthTask, TextShape, SYNTH_ALPHABET};
use crate::metrics::{scorer_by_name, ExternalConfig, SCORER_URL_ENV};
use crate::prefbuild::GridResolution;
use crate::toymt::{ModelConfig, SamplingParams};
use crate::train::{ObjectiveKind, OptimizerKind, TrainConfig};
use crate::util::mix_seed;

/// Whole-pipeline configuration. Every section has defaults, so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; stages without an explicit seed derive theirs from it.
    pub seed: u64,
    pub workers: usize,
    /// Language that separates `xx-en` from `en-xx` directions.
    pub pivot: String,
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub model: ModelSection,
    pub pretrain: TrainSection,
    pub candidates: CandidatesConfig,
    pub scoring: ScoringConfig,
    pub prefs: PrefsConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            pivot: "en".into(),
            paths: PathsConfig::default(),
            corpus: CorpusConfig::default(),
            model: ModelSection::default(),
            pretrain: TrainSection {
                beta: 0.0,
                epochs: 100,
                warmup_steps: Some(1000),
                ..TrainSection::default()
            },
            candidates: CandidatesConfig::default(),
            scoring: ScoringConfig::default(),
            prefs: PrefsConfig::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Artifact locations; relative paths are resolved against `root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub test_corpus: PathBuf,
    pub pretrain_corpus: PathBuf,
    pub base_model: PathBuf,
    pub pretrain_log: PathBuf,
    pub candidates: PathBuf,
    pub scores: PathBuf,
    pub prefs: PathBuf,
    pub calibration: PathBuf,
    pub grid_dir: PathBuf,
    pub model: PathBuf,
    pub train_log: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            root: "run".into(),
            corpus: "corpus.jsonl".into(),
            test_corpus: "test.jsonl".into(),
            pretrain_corpus: "pretrain.jsonl".into(),
            base_model: "base.ckpt".into(),
            pretrain_log: "pretrain_log.csv".into(),
            candidates: "candidates.jsonl".into(),
            scores: "scores.jsonl".into(),
            prefs: "prefs.jsonl".into(),
            calibration: "calibration.json".into(),
            grid_dir: "grid".into(),
            model: "model.ckpt".into(),
            train_log: "train_log.csv".into(),
            reports_dir: "reports".into(),
        }
    }
}

impl PathsConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub task: SynthTask,
    pub n_train: usize,
    pub n_test: usize,
    pub n_pretrain: usize,
    pub noise_rate: f64,
    pub shape: TextShape,
    /// Train corpus seed; the test and pretraining corpora use `seed + 1` and `seed + 2`.
    pub seed: Option<u64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            task: SynthTask::Cipher,
            n_train: 2000,
            n_test: 200,
            n_pretrain: 200,
            noise_rate: 0.1,
            shape: TextShape::default(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub seed: Option<u64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            dim: 24,
            n_layers: 1,
            n_heads: 2,
            max_len: 32,
            seed: None,
        }
    }
}

/// Training settings without the objective, which comes from the subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub beta: f64,
    pub base_lr: f64,
    pub warmup_steps: Option<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: Option<u64>,
    /// `prefs` trains on the preference dataset, `references` on the training corpus.
    pub data: TrainData,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            beta: 1.0,
            base_lr: 3e-3,
            warmup_steps: None,
            batch_size: 16,
            epochs: 3,
            optimizer: OptimizerKind::Adam,
            seed: None,
            data: TrainData::Prefs,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, objective: ObjectiveKind, seed: u64) -> TrainConfig {
        TrainConfig {
            objective,
            beta: self.beta,
            base_lr: self.base_lr,
            warmup_steps: self.warmup_steps,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainData {
    Prefs,
    References,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CandidatesConfig {
    pub k: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub max_len: usize,
    pub include_reference: bool,
    /// External system name → hypotheses JSONL (relative to the working directory).
    pub external: BTreeMap<String, PathBuf>,
    pub seed: Option<u64>,
}

impl Default for CandidatesConfig {
    fn default() -> Self {
        Self {
            k: 20,
            top_p: 0.6,
            temperature: 0.9,
            max_len: 40,
            include_reference: true,
            external: BTreeMap::new(),
            seed: None,
        }
    }
}

impl CandidatesConfig {
    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            top_p: self.top_p,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringConfig {
    /// Alignment metric used to score candidates and build pairs.
    pub metric: String,
    pub external: Option<ExternalConfig>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            metric: "edit_sim".into(),
            external: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrefsConfig {
    /// Systems removed before multi-system selection (`multi-ablate`).
    pub exclude: Vec<String>,
    /// Fixed chosen system (`fixed-chosen`).
    pub chosen_system: String,
    /// Let `multi` consider sampled candidates too.
    pub multi_include_samples: bool,
    pub o_r: usize,
    pub o_c: usize,
    pub target_chosen: Option<f64>,
    pub target_rejected: Option<f64>,
    pub grid: GridResolution,
}

impl Default for PrefsConfig {
    fn default() -> Self {
        Self {
            exclude: vec!["ref".into()],
            chosen_system: "ref".into(),
            multi_include_samples: false,
            o_r: 20,
            o_c: 20,
            target_chosen: None,
            target_rejected: None,
            grid: GridResolution::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub metrics: Vec<String>,
    pub alpha: f64,
    pub max_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: vec!["chrf".into(), "bleu".into(), "edit_sim".into()],
            alpha: 0.05,
            max_len: 40,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` to a TOML table. Values parse as TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!(
            "override `{assignment}` has an empty key segment"
        )));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => {
                return Err(CliError::Config(format!(
                    "override `{key}`: `{p}` is not a table"
                )))
            }
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io {
                    path: p.display().to_string(),
                    source: e,
                })?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        for m in self
            .eval
            .metrics
            .iter()
            .chain(std::iter::once(&self.scoring.metric))
        {
            if !m.starts_with("ext:") {
                scorer_by_name(m, None).map_err(|e| CliError::Config(e.to_string()))?;
            } else if self.external_config().is_none() {
                return bad(format!(
                    "metric `{m}` needs [scoring.external] or {SCORER_URL_ENV}"
                ));
            }
        }
        if !(self.eval.alpha > 0.0 && self.eval.alpha < 1.0) {
            return bad(format!("eval.alpha {} outside (0, 1)", self.eval.alpha));
        }
        if self.candidates.k == 0 {
            return bad("candidates.k must be at least 1".into());
        }
        self.model_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.candidates
            .sampling()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        for (name, t) in [("pretrain", &self.pretrain), ("train", &self.train)] {
            t.to_train_config(ObjectiveKind::Sft, 0)
                .validate()
                .map_err(|e| CliError::Config(format!("[{name}] {e}")))?;
        }
        Ok(())
    }

    /// External scorer settings with the environment endpoint applied.
    pub fn external_config(&self) -> Option<ExternalConfig> {
        let env_set = std::env::var(SCORER_URL_ENV).is_ok_and(|v| !v.is_empty());
        match &self.scoring.external {
            Some(c) => Some(c.clone().with_env_override()),
            None if env_set => Some(ExternalConfig::default().with_env_override()),
            None => None,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            chars: SYNTH_ALPHABET.into(),
            dim: self.model.dim,
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            max_len: self.model.max_len,
            seed: self.stage_seed(self.model.seed, "model"),
        }
    }

    pub fn stage_seed(&self, explicit: Option<u64>, label: &str) -> u64 {
        explicit.unwrap_or_else(|| mix_seed(self.seed, label))
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.paths.resolve(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_typed_values() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "train.beta=0.5").unwrap();
        apply_override(&mut t, "scoring.metric=chrf").unwrap();
        apply_override(&mut t, "eval.metrics=[\"bleu\"]").unwrap();
        let cfg: RunConfig = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(cfg.train.beta, 0.5);
        assert_eq!(cfg.scoring.metric, "chrf");
        assert_eq!(cfg.eval.metrics, vec!["bleu"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::load(None, &["train.betta=0.5".into()]).is_err());
        assert!(RunConfig::load(None, &["nope=1".into()]).is_err());
        assert!(RunConfig::load(None, &["train.beta".into()]).is_err());
        assert!(RunConfig::load(None, &[]).is_ok());
    }
}
