//! Segments, candidate pools and preference pairs.
//!
//! Everything here is immutable once constructed; constructors validate the
//! invariants so that builders and loaders can rely on them.

mod jsonl;
mod stats;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use jsonl::{read_jsonl, write_jsonl, HypothesisRecord, JsonlRecord, ScoredCandidates};
pub use stats::{dataset_stats, DatasetStats};
pub use synth::{
    apply_task, generate_synthetic_corpus, generate_with, SynthTask, SyntheticCorpusSpec,
    TextShape, CIPHER_KEY, SYNTH_ALPHABET,
};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: record `{id}` is invalid: {message}")]
    Validation {
        line: usize,
        id: String,
        message: String,
    },
    #[error("record `{id}` is invalid: {message}")]
    Invalid { id: String, message: String },
    #[error("duplicate segment id `{0}`")]
    DuplicateId(String),
    #[error("unknown segment id `{0}`")]
    UnknownSegment(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// A translation direction between two short language codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LangPair {
    pub src: String,
    pub tgt: String,
}

/// Whether a language pair translates into or out of the pivot language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// `xx-en` when the pivot is `en`.
    IntoPivot,
    /// `en-xx` when the pivot is `en`.
    OutOfPivot,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::IntoPivot => "xx-en",
            Direction::OutOfPivot => "en-xx",
        }
    }
}

impl LangPair {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>) -> Result<Self, CorpusError> {
        let (src, tgt) = (src.into(), tgt.into());
        if src.is_empty() || tgt.is_empty() {
            return Err(CorpusError::Parameter(
                "language codes must be non-empty".into(),
            ));
        }
        if src == tgt {
            return Err(CorpusError::Parameter(format!(
                "source and target language are both `{src}`"
            )));
        }
        Ok(Self { src, tgt })
    }

    pub fn direction(&self, pivot: &str) -> Result<Direction, CorpusError> {
        match (self.src == pivot, self.tgt == pivot) {
            (false, true) => Ok(Direction::IntoPivot),
            (true, false) => Ok(Direction::OutOfPivot),
            _ => Err(CorpusError::Parameter(format!(
                "language pair {self} does not involve pivot `{pivot}`"
            ))),
        }
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub lang_pair: LangPair,
    pub source: String,
    pub reference: Option<String>,
}

impl Segment {
    pub fn new(
        id: impl Into<String>,
        lang_pair: LangPair,
        source: impl Into<String>,
        reference: Option<String>,
    ) -> Result<Self, CorpusError> {
        let seg = Self {
            id: id.into(),
            lang_pair,
            source: source.into(),
            reference,
        };
        seg.validate()?;
        Ok(seg)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.id.is_empty() {
            return Err(CorpusError::Invalid {
                id: String::new(),
                message: "empty id".into(),
            });
        }
        if self.source.is_empty() {
            return Err(CorpusError::Invalid {
                id: self.id.clone(),
                message: "empty source text".into(),
            });
        }
        Ok(())
    }
}

/// An ordered collection of segments with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    segments: Vec<Segment>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(segments: Vec<Segment>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self { segments, index })
    }

    pub fn get(&self, id: &str) -> Option<&Segment> {
        self.index.get(id).map(|&i| &self.segments[i])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }
}

/// Which system produced a candidate translation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemId {
    /// Greedy output of the model being aligned.
    BaseGreedy,
    /// The gold reference.
    Reference,
    /// Any other translation system, e.g. a stronger model.
    External(String),
    /// The k-th (1-based) top-p sample of the base model.
    Sampled(u32),
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemId::BaseGreedy => f.write_str("base"),
            SystemId::Reference => f.write_str("ref"),
            SystemId::External(name) => write!(f, "ext:{name}"),
            SystemId::Sampled(k) => write!(f, "sample:{k}"),
        }
    }
}

impl FromStr for SystemId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(SystemId::BaseGreedy),
            "ref" => Ok(SystemId::Reference),
            _ => {
                if let Some(name) = s.strip_prefix("ext:") {
                    if name.is_empty() {
                        return Err(CorpusError::Parameter(
                            "external system name is empty".into(),
                        ));
                    }
                    Ok(SystemId::External(name.to_string()))
                } else if let Some(k) = s.strip_prefix("sample:") {
                    let k: u32 = k.parse().map_err(|_| {
                        CorpusError::Parameter(format!("bad sample index in `{s}`"))
                    })?;
                    if k == 0 {
                        return Err(CorpusError::Parameter("sample indices start at 1".into()));
                    }
                    Ok(SystemId::Sampled(k))
                } else {
                    Err(CorpusError::Parameter(format!("unknown system `{s}`")))
                }
            }
        }
    }
}

impl Serialize for SystemId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SystemId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub system: SystemId,
    pub text: String,
}

impl Candidate {
    pub fn new(system: SystemId, text: impl Into<String>) -> Self {
        Self {
            system,
            text: text.into(),
        }
    }
}

/// A source segment's pool of candidate translations.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    segment_id: String,
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    /// Builds a pool of at least two candidates.
    ///
    /// Non-sampled systems may appear at most once; sample indices must be
    /// distinct and within `1..=K` where K is the number of samples. Only the
    /// gold reference is required to be non-empty, since model outputs can be
    /// degenerate and are still scored.
    pub fn new(
        segment_id: impl Into<String>,
        candidates: Vec<Candidate>,
    ) -> Result<Self, CorpusError> {
        let segment_id = segment_id.into();
        let invalid = |message: String| CorpusError::Invalid {
            id: segment_id.clone(),
            message,
        };
        if candidates.len() < 2 {
            return Err(invalid(format!(
                "need at least 2 candidates, got {}",
                candidates.len()
            )));
        }
        let n_samples = candidates
            .iter()
            .filter(|c| matches!(c.system, SystemId::Sampled(_)))
            .count();
        let mut seen = std::collections::HashSet::new();
        for c in &candidates {
            if !seen.insert(&c.system) {
                return Err(invalid(format!(
                    "system `{}` appears more than once",
                    c.system
                )));
            }
            match c.system {
                SystemId::Sampled(k) if k == 0 || k as usize > n_samples => {
                    return Err(invalid(format!("sample index {k} outside 1..={n_samples}")));
                }
                SystemId::Reference if c.text.is_empty() => {
                    return Err(invalid("reference candidate is empty".into()));
                }
                _ => {}
            }
        }
        Ok(Self {
            segment_id,
            candidates,
        })
    }

    pub fn segment_id(&self) -> &str {
        &self.segment_id
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn get(&self, system: &SystemId) -> Option<&Candidate> {
        self.candidates.iter().find(|c| &c.system == system)
    }
}

/// One preference triple `(x, y_rejected, y_chosen)` with the scores that ordered it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub segment_id: String,
    pub chosen: Candidate,
    pub rejected: Candidate,
    pub chosen_score: f64,
    pub rejected_score: f64,
    pub metric: String,
    pub builder: String,
}

impl PreferencePair {
    pub fn new(
        segment_id: impl Into<String>,
        chosen: (Candidate, f64),
        rejected: (Candidate, f64),
        metric: impl Into<String>,
        builder: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let pair = Self {
            segment_id: segment_id.into(),
            chosen: chosen.0,
            rejected: rejected.0,
            chosen_score: chosen.1,
            rejected_score: rejected.1,
            metric: metric.into(),
            builder: builder.into(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::Invalid {
            id: self.segment_id.clone(),
            message,
        };
        if !self.chosen_score.is_finite() || !self.rejected_score.is_finite() {
            return Err(invalid("scores must be finite".into()));
        }
        if self.chosen_score <= self.rejected_score {
            return Err(invalid(format!(
                "chosen score {} is not strictly above rejected score {}",
                self.chosen_score, self.rejected_score
            )));
        }
        if self.metric.is_empty() {
            return Err(invalid("metric name is empty".into()));
        }
        Ok(())
    }

    pub fn margin(&self) -> f64 {
        self.chosen_score - self.rejected_score
    }
}

/// Provenance of a preference dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub metric: String,
    pub builder: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreferenceDataset {
    pub pairs: Vec<PreferencePair>,
    pub metadata: DatasetMetadata,
}

impl PreferenceDataset {
    pub fn new(pairs: Vec<PreferencePair>, metadata: DatasetMetadata) -> Result<Self, CorpusError> {
        for p in &pairs {
            p.validate()?;
        }
        Ok(Self { pairs, metadata })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
