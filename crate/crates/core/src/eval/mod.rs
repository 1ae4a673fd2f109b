//! System evaluation, paired significance tests and comparison reports.

mod grid;
mod report;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError};
use crate::metrics::{score_parallel, MetricError, MetricScorer, ScoreRequest};
use crate::toymt::{greedy_decode, ModelError, ToyModel};
use crate::train::TrainError;

pub use grid::{run_quality_grid_experiment, GridExperiment, GridExperimentConfig};
pub use report::{compare_report, CompareRow, CompareTable};
pub use stats::{paired_t_test, student_t_upper_tail, SignificanceResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("hypotheses do not cover the corpus: missing {missing:?}, extra {extra:?}")]
    Coverage {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("need at least 2 paired scores, got {0}")]
    InsufficientData(usize),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("reports are not comparable: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Build(#[from] crate::prefbuild::PrefBuildError),
}

/// How a metric's group value is formed from its segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    SegmentMean,
    CorpusMicro,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::SegmentMean => "segment-mean",
            Aggregation::CorpusMicro => "corpus-micro",
        }
    }
}

/// Scores of one system on one corpus.
///
/// Segments are held in id order, so the report does not depend on the order
/// of the corpus or the hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub metrics: Vec<String>,
    pub aggregation: BTreeMap<String, Aggregation>,
    pub segment_ids: Vec<String>,
    /// Language pair of each segment, aligned with `segment_ids`.
    pub segment_lang_pairs: Vec<String>,
    /// Per-metric segment scores aligned with `segment_ids`.
    pub segment_scores: BTreeMap<String, Vec<f64>>,
    /// Language pair → metric → value.
    pub lang_pairs: BTreeMap<String, BTreeMap<String, f64>>,
    /// Direction label (`xx-en`, `en-xx`) → metric → unweighted mean over its language pairs.
    pub directions: BTreeMap<String, BTreeMap<String, f64>>,
    /// Metric → value over the whole corpus.
    pub overall: BTreeMap<String, f64>,
    /// Language pairs per direction label.
    pub direction_members: BTreeMap<String, Vec<String>>,
}

impl EvalReport {
    /// Segment indices belonging to a group: `all`, a direction label or a language pair.
    pub fn group_indices(&self, group: &str) -> Vec<usize> {
        let members: Option<&Vec<String>> = self.direction_members.get(group);
        (0..self.segment_ids.len())
            .filter(|&i| {
                let lp = &self.segment_lang_pairs[i];
                group == "all" || members.is_some_and(|m| m.contains(lp)) || lp == group
            })
            .collect()
    }

    /// Group names in report order: `all`, directions, then language pairs.
    pub fn groups(&self) -> Vec<String> {
        let mut g = vec!["all".to_string()];
        g.extend(self.directions.keys().cloned());
        // a language pair literally named like a direction label is reported once, as the direction
        g.extend(
            self.lang_pairs
                .keys()
                .filter(|lp| !self.directions.contains_key(*lp))
                .cloned(),
        );
        g
    }

    pub fn group_value(&self, group: &str, metric: &str) -> Option<f64> {
        if group == "all" {
            return self.overall.get(metric).copied();
        }
        self.directions
            .get(group)
            .or_else(|| self.lang_pairs.get(group))
            .and_then(|m| m.get(metric))
            .copied()
    }
}

fn aggregate(
    scorer: &dyn MetricScorer,
    requests: &[ScoreRequest],
    scores: &[f64],
) -> Result<f64, EvalError> {
    if scorer.corpus_is_micro() {
        Ok(scorer.corpus_score(requests)?)
    } else {
        Ok(crate::util::mean(scores).unwrap_or(0.0))
    }
}

/// Scores `hypotheses` (segment id → text) against `corpus` with every scorer.
pub fn evaluate_system(
    system: &str,
    hypotheses: &BTreeMap<String, String>,
    corpus: &Corpus,
    scorers: &[Arc<dyn MetricScorer>],
    pivot: &str,
    workers: usize,
) -> Result<EvalReport, EvalError> {
    let ids: BTreeSet<&str> = corpus.segments().iter().map(|s| s.id.as_str()).collect();
    let missing: Vec<String> = ids
        .iter()
        .filter(|id| !hypotheses.contains_key(**id))
        .map(|s| s.to_string())
        .collect();
    let extra: Vec<String> = hypotheses
        .keys()
        .filter(|k| !ids.contains(k.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(EvalError::Coverage { missing, extra });
    }

    let mut segments: Vec<_> = corpus.segments().iter().collect();
    segments.sort_by(|a, b| a.id.cmp(&b.id));
    let segment_ids: Vec<String> = segments.iter().map(|s| s.id.clone()).collect();
    let segment_lang_pairs: Vec<String> =
        segments.iter().map(|s| s.lang_pair.to_string()).collect();
    let requests: Vec<ScoreRequest> = segments
        .iter()
        .map(|s| ScoreRequest::new(&s.source, &hypotheses[&s.id], s.reference.clone()))
        .collect();

    let mut by_lp: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, lp) in segment_lang_pairs.iter().enumerate() {
        by_lp.entry(lp.clone()).or_default().push(i);
    }
    let mut direction_members: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in &segments {
        let label = s.lang_pair.direction(pivot)?.label().to_string();
        let members = direction_members.entry(label).or_default();
        let lp = s.lang_pair.to_string();
        if !members.contains(&lp) {
            members.push(lp);
        }
    }
    for m in direction_members.values_mut() {
        m.sort();
    }

    let mut report = EvalReport {
        system: system.to_string(),
        metrics: Vec::new(),
        aggregation: BTreeMap::new(),
        segment_ids,
        segment_lang_pairs,
        segment_scores: BTreeMap::new(),
        lang_pairs: BTreeMap::new(),
        directions: BTreeMap::new(),
        overall: BTreeMap::new(),
        direction_members,
    };
    for scorer in scorers {
        let name = scorer.metric().name.clone();
        let scores = score_parallel(scorer.as_ref(), &requests, workers, 256)?;
        let agg = if scorer.corpus_is_micro() {
            Aggregation::CorpusMicro
        } else {
            Aggregation::SegmentMean
        };
        for (lp, idx) in &by_lp {
            let reqs: Vec<ScoreRequest> = idx.iter().map(|&i| requests[i].clone()).collect();
            let sc: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            report
                .lang_pairs
                .entry(lp.clone())
                .or_default()
                .insert(name.clone(), aggregate(scorer.as_ref(), &reqs, &sc)?);
        }
        for (label, lps) in &report.direction_members {
            let v = lps
                .iter()
                .map(|lp| report.lang_pairs[lp][&name])
                .sum::<f64>()
                / lps.len() as f64;
            report
                .directions
                .entry(label.clone())
                .or_default()
                .insert(name.clone(), v);
        }
        report.overall.insert(
            name.clone(),
            aggregate(scorer.as_ref(), &requests, &scores)?,
        );
        report.aggregation.insert(name.clone(), agg);
        report.segment_scores.insert(name.clone(), scores);
        report.metrics.push(name);
    }
    Ok(report)
}

/// Greedy translations of every segment, keyed by segment id.
pub fn greedy_hypotheses(
    model: &ToyModel,
    corpus: &Corpus,
    max_len: usize,
    workers: usize,
) -> Result<BTreeMap<String, String>, EvalError> {
    let run = || -> Result<Vec<(String, String)>, ModelError> {
        corpus
            .segments()
            .par_iter()
            .map(|s| Ok((s.id.clone(), greedy_decode(model, &s.source, max_len)?)))
            .collect()
    };
    let pairs = if workers <= 1 {
        corpus
            .segments()
            .iter()
            .map(|s| Ok((s.id.clone(), greedy_decode(model, &s.source, max_len)?)))
            .collect::<Result<Vec<_>, ModelError>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EvalError::Mismatch(e.to_string()))?
            .install(run)?
    };
    Ok(pairs.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LangPair, Segment};
    use crate::metrics::scorer_by_name;

    fn corpus() -> Corpus {
        let seg = |id: &str, s: &str, t: &str, r: &str| {
            Segment::new(
                id,
                LangPair::new(s, t).unwrap(),
                "src text",
                Some(r.to_string()),
            )
            .unwrap()
        };
        Corpus::new(vec![
            seg("a", "en", "cs", "hello world"),
            seg("b", "cs", "en", "good day"),
            seg("c", "en", "cs", "fine thanks"),
        ])
        .unwrap()
    }

    #[test]
    fn references_as_hypotheses_score_perfectly() {
        let c = corpus();
        let hyps: BTreeMap<String, String> = c
            .segments()
            .iter()
            .map(|s| (s.id.clone(), s.reference.clone().unwrap()))
            .collect();
        let scorers = vec![
            scorer_by_name("chrf", None).unwrap(),
            scorer_by_name("edit_sim", None).unwrap(),
        ];
        let r = evaluate_system("ref", &hyps, &c, &scorers, "en", 1).unwrap();
        for m in ["chrf", "edit_sim"] {
            assert_eq!(r.overall[m], 100.0);
            for v in r.lang_pairs.values().chain(r.directions.values()) {
                assert_eq!(v[m], 100.0);
            }
        }
        assert_eq!(r.direction_members["en-xx"], vec!["en-cs".to_string()]);
        assert_eq!(r.direction_members["xx-en"], vec!["cs-en".to_string()]);
        assert_eq!(r.aggregation["chrf"], Aggregation::CorpusMicro);
    }

    #[test]
    fn coverage_errors_list_ids() {
        let c = corpus();
        let mut hyps: BTreeMap<String, String> = BTreeMap::new();
        hyps.insert("a".into(), "x".into());
        hyps.insert("zz".into(), "x".into());
        match evaluate_system(
            "s",
            &hyps,
            &c,
            &[scorer_by_name("chrf", None).unwrap()],
            "en",
            1,
        ) {
            Err(EvalError::Coverage { missing, extra }) => {
                assert_eq!(missing, vec!["b", "c"]);
                assert_eq!(extra, vec!["zz"]);
            }
            other => panic!("{other:?}"),
        }
    }
}
