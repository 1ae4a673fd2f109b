//! Translation quality metrics behind one scoring contract.
//!
//! Built-in metrics are reference-based, deterministic and scaled to `[0, 100]`.
//! Served metrics are reached through [`ExternalScorer`].

mod bleu;
mod chrf;
mod external;
mod simple;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, corpus_bleu, sentence_bleu, BleuMode, BleuStats, BLEU_MAX_ORDER};
pub use chrf::{chrf, chrf_corpus, chrf_stats, chrf_with, ChrfStats, CHRF_BETA, CHRF_ORDER};
pub use external::{ExternalConfig, ExternalScorer, SCORER_URL_ENV};
pub use simple::{bigram_f1, edit_sim};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric `{metric}` needs a reference (request {index})")]
    MissingReference { metric: String, index: usize },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("scorer transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("scorer rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("score {score} for request {index} is outside [{lo}, {hi}]")]
    OutOfRange {
        index: usize,
        score: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid metric configuration: {0}")]
    Config(String),
}

/// Static description of a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricId {
    pub name: String,
    pub needs_reference: bool,
    pub higher_is_better: bool,
    pub range: (f64, f64),
}

impl MetricId {
    fn builtin(name: &str) -> Self {
        Self {
            name: name.into(),
            needs_reference: true,
            higher_is_better: true,
            range: (0.0, 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub source: String,
    pub hypothesis: String,
    pub reference: Option<String>,
}

impl ScoreRequest {
    pub fn new(
        source: impl Into<String>,
        hypothesis: impl Into<String>,
        reference: Option<String>,
    ) -> Self {
        Self {
            source: source.into(),
            hypothesis: hypothesis.into(),
            reference,
        }
    }

    /// A request whose source is irrelevant to reference-based metrics.
    pub fn pair(hypothesis: impl Into<String>, reference: impl Into<String>) -> Self {
        Self::new("", hypothesis, Some(reference.into()))
    }
}

/// A scorer returns one score per request, in request order.
pub trait MetricScorer: Send + Sync {
    fn metric(&self) -> &MetricId;

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, MetricError>;

    /// System-level score; the mean of segment scores unless the metric
    /// defines its own corpus aggregation.
    fn corpus_score(&self, requests: &[ScoreRequest]) -> Result<f64, MetricError> {
        let scores = self.score_batch(requests)?;
        Ok(if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        })
    }

    /// Whether [`MetricScorer::corpus_score`] micro-aggregates counts rather than averaging segments.
    fn corpus_is_micro(&self) -> bool {
        false
    }
}

fn references<'a>(metric: &str, requests: &'a [ScoreRequest]) -> Result<Vec<&'a str>, MetricError> {
    requests
        .iter()
        .enumerate()
        .map(|(index, r)| {
            r.reference
                .as_deref()
                .ok_or_else(|| MetricError::MissingReference {
                    metric: metric.into(),
                    index,
                })
        })
        .collect()
}

/// Scorer for a built-in segment-level function.
struct SegmentScorer {
    id: MetricId,
    f: fn(&str, &str) -> f64,
}

impl MetricScorer for SegmentScorer {
    fn metric(&self) -> &MetricId {
        &self.id
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, MetricError> {
        let refs = references(&self.id.name, requests)?;
        Ok(requests
            .iter()
            .zip(refs)
            .map(|(r, reference)| (self.f)(&r.hypothesis, reference))
            .collect())
    }
}

pub struct ChrfScorer {
    id: MetricId,
}

impl Default for ChrfScorer {
    fn default() -> Self {
        Self {
            id: MetricId::builtin("chrf"),
        }
    }
}

impl MetricScorer for ChrfScorer {
    fn metric(&self) -> &MetricId {
        &self.id
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, MetricError> {
        let refs = references(&self.id.name, requests)?;
        Ok(requests
            .iter()
            .zip(refs)
            .map(|(r, reference)| chrf(&r.hypothesis, reference))
            .collect())
    }

    fn corpus_score(&self, requests: &[ScoreRequest]) -> Result<f64, MetricError> {
        let refs = references(&self.id.name, requests)?;
        let pairs: Vec<(&str, &str)> = requests
            .iter()
            .zip(refs)
            .map(|(r, x)| (r.hypothesis.as_str(), x))
            .collect();
        Ok(chrf_corpus(&pairs))
    }

    fn corpus_is_micro(&self) -> bool {
        true
    }
}

pub struct BleuScorer {
    id: MetricId,
}

impl Default for BleuScorer {
    fn default() -> Self {
        Self {
            id: MetricId::builtin("bleu"),
        }
    }
}

impl MetricScorer for BleuScorer {
    fn metric(&self) -> &MetricId {
        &self.id
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, MetricError> {
        let refs = references(&self.id.name, requests)?;
        Ok(requests
            .iter()
            .zip(refs)
            .map(|(r, reference)| sentence_bleu(&r.hypothesis, reference))
            .collect())
    }

    fn corpus_score(&self, requests: &[ScoreRequest]) -> Result<f64, MetricError> {
        bleu(requests, BleuMode::Corpus)
    }

    fn corpus_is_micro(&self) -> bool {
        true
    }
}

/// Names accepted by [`scorer_by_name`] besides `ext:<name>`.
pub const BUILTIN_METRICS: [&str; 4] = ["chrf", "bleu", "edit_sim", "bigram_f1"];

/// Looks up a scorer by name. `ext:<name>` resolves to the served metric
/// `<name>` and requires an external configuration.
pub fn scorer_by_name(
    name: &str,
    external: Option<&ExternalConfig>,
) -> Result<Arc<dyn MetricScorer>, MetricError> {
    match name {
        "chrf" => Ok(Arc::new(ChrfScorer::default())),
        "bleu" => Ok(Arc::new(BleuScorer::default())),
        "edit_sim" => Ok(Arc::new(SegmentScorer {
            id: MetricId::builtin("edit_sim"),
            f: edit_sim,
        })),
        "bigram_f1" => Ok(Arc::new(SegmentScorer {
            id: MetricId::builtin("bigram_f1"),
            f: bigram_f1,
        })),
        _ => match name.strip_prefix("ext:") {
            Some(remote) if !remote.is_empty() => {
                let cfg = external.ok_or_else(|| {
                    MetricError::Config(format!(
                        "metric `{name}` needs an external scorer endpoint"
                    ))
                })?;
                Ok(Arc::new(ExternalScorer::new(name, remote, cfg.clone())?))
            }
            _ => Err(MetricError::UnknownMetric(name.into())),
        },
    }
}

/// Scores `requests` in chunks across `workers` threads; the result is in
/// request order and, for pure scorers, independent of `workers`.
pub fn score_parallel(
    scorer: &dyn MetricScorer,
    requests: &[ScoreRequest],
    workers: usize,
    chunk_size: usize,
) -> Result<Vec<f64>, MetricError> {
    let chunk_size = chunk_size.max(1);
    let run = || -> Result<Vec<f64>, MetricError> {
        let parts: Vec<Vec<f64>> = requests
            .par_chunks(chunk_size)
            .map(|chunk| scorer.score_batch(chunk))
            .collect::<Result<_, _>>()?;
        Ok(parts.concat())
    };
    let scores = if workers <= 1 {
        requests
            .chunks(chunk_size)
            .map(|c| scorer.score_batch(c))
            .collect::<Result<Vec<_>, _>>()?
            .concat()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| MetricError::Config(e.to_string()))?
            .install(run)?
    };
    check_range(scorer.metric(), &scores)?;
    Ok(scores)
}

fn check_range(id: &MetricId, scores: &[f64]) -> Result<(), MetricError> {
    let (lo, hi) = id.range;
    for (index, &score) in scores.iter().enumerate() {
        if !(score >= lo && score <= hi) {
            return Err(MetricError::OutOfRange {
                index,
                score,
                lo,
                hi,
            });
        }
    }
    Ok(())
}
