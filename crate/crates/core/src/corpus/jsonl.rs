use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Candidate, CandidateSet, CorpusError, LangPair, PreferencePair, Segment};

/// A type persisted as one JSON object per line.
///
/// `Wire` is the on-disk shape (strict: unknown fields are rejected) and the
/// conversion back into the domain type re-runs validation.
pub trait JsonlRecord: Sized {
    type Wire: Serialize + DeserializeOwned;

    fn to_wire(&self) -> Self::Wire;
    fn from_wire(wire: Self::Wire) -> Result<Self, CorpusError>;
    /// Identifier used in validation messages.
    fn wire_id(wire: &Self::Wire) -> String;
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_jsonl<T: JsonlRecord>(path: impl AsRef<Path>) -> Result<Vec<T>, CorpusError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: T::Wire = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let id = T::wire_id(&wire);
        let record = T::from_wire(wire).map_err(|e| match e {
            CorpusError::Invalid { message, .. } | CorpusError::Parameter(message) => {
                CorpusError::Validation {
                    line: line_no,
                    id: id.clone(),
                    message,
                }
            }
            other => other,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: JsonlRecord>(
    path: impl AsRef<Path>,
    records: &[T],
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for r in records {
        let line = serde_json::to_string(&r.to_wire()).expect("wire records always serialize");
        w.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentWire {
    id: String,
    src_lang: String,
    tgt_lang: String,
    source: String,
    reference: Option<String>,
}

impl JsonlRecord for Segment {
    type Wire = SegmentWire;

    fn to_wire(&self) -> SegmentWire {
        SegmentWire {
            id: self.id.clone(),
            src_lang: self.lang_pair.src.clone(),
            tgt_lang: self.lang_pair.tgt.clone(),
            source: self.source.clone(),
            reference: self.reference.clone(),
        }
    }

    fn from_wire(w: SegmentWire) -> Result<Self, CorpusError> {
        Segment::new(
            w.id,
            LangPair::new(w.src_lang, w.tgt_lang)?,
            w.source,
            w.reference,
        )
    }

    fn wire_id(w: &SegmentWire) -> String {
        w.id.clone()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSetWire {
    segment_id: String,
    candidates: Vec<Candidate>,
}

impl JsonlRecord for CandidateSet {
    type Wire = CandidateSetWire;

    fn to_wire(&self) -> CandidateSetWire {
        CandidateSetWire {
            segment_id: self.segment_id.clone(),
            candidates: self.candidates.clone(),
        }
    }

    fn from_wire(w: CandidateSetWire) -> Result<Self, CorpusError> {
        CandidateSet::new(w.segment_id, w.candidates)
    }

    fn wire_id(w: &CandidateSetWire) -> String {
        w.segment_id.clone()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencePairWire {
    segment_id: String,
    chosen: Candidate,
    rejected: Candidate,
    chosen_score: f64,
    rejected_score: f64,
    metric: String,
    builder: String,
}

impl JsonlRecord for PreferencePair {
    type Wire = PreferencePairWire;

    fn to_wire(&self) -> PreferencePairWire {
        PreferencePairWire {
            segment_id: self.segment_id.clone(),
            chosen: self.chosen.clone(),
            rejected: self.rejected.clone(),
            chosen_score: self.chosen_score,
            rejected_score: self.rejected_score,
            metric: self.metric.clone(),
            builder: self.builder.clone(),
        }
    }

    fn from_wire(w: PreferencePairWire) -> Result<Self, CorpusError> {
        PreferencePair::new(
            w.segment_id,
            (w.chosen, w.chosen_score),
            (w.rejected, w.rejected_score),
            w.metric,
            w.builder,
        )
    }

    fn wire_id(w: &PreferencePairWire) -> String {
        w.segment_id.clone()
    }
}

/// Scores for every candidate of one candidate set, in candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredCandidates {
    pub segment_id: String,
    pub metric: String,
    pub scores: Vec<f64>,
}

impl JsonlRecord for ScoredCandidates {
    type Wire = ScoredCandidates;

    fn to_wire(&self) -> Self {
        self.clone()
    }

    fn from_wire(w: Self) -> Result<Self, CorpusError> {
        if let Some(bad) = w.scores.iter().find(|s| !s.is_finite()) {
            return Err(CorpusError::Invalid {
                id: w.segment_id,
                message: format!("non-finite score {bad}"),
            });
        }
        Ok(w)
    }

    fn wire_id(w: &Self) -> String {
        w.segment_id.clone()
    }
}

/// A system output for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisRecord {
    pub segment_id: String,
    pub text: String,
}

impl JsonlRecord for HypothesisRecord {
    type Wire = HypothesisRecord;

    fn to_wire(&self) -> Self {
        self.clone()
    }

    fn from_wire(w: Self) -> Result<Self, CorpusError> {
        Ok(w)
    }

    fn wire_id(w: &Self) -> String {
        w.segment_id.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SystemId;

    fn pair(c: f64, r: f64) -> PreferencePair {
        PreferencePair::new(
            "seg-1",
            (Candidate::new(SystemId::External("gpt4".into()), "good"), c),
            (Candidate::new(SystemId::Sampled(3), ""), r),
            "edit_sim",
            "multi",
        )
        .unwrap()
    }

    #[test]
    fn pairs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![pair(90.0, 80.0), pair(0.1 + 0.2, 0.1), pair(1e-300, -5.5)];
        write_jsonl(&path, &pairs).unwrap();
        let back: Vec<PreferencePair> = read_jsonl(&path).unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn empty_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let segs: Vec<Segment> = read_jsonl(&path).unwrap();
        assert!(segs.is_empty());
    }

    #[test]
    fn equal_scores_are_rejected_with_line_and_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&pair(2.0, 1.0).to_wire()).unwrap();
        let bad = r#"{"segment_id":"seg-9","chosen":{"system":"ref","text":"a"},"rejected":{"system":"base","text":"b"},"chosen_score":5.0,"rejected_score":5.0,"metric":"chrf","builder":"multi"}"#;
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match read_jsonl::<PreferencePair>(&path) {
            Err(CorpusError::Validation { line, id, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(id, "seg-9");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"src_lang\":\"en\",\"tgt_lang\":\"xx\",\"source\":\"s\",\"reference\":null}\n{not json\n",
        )
        .unwrap();
        assert!(matches!(
            read_jsonl::<Segment>(&path),
            Err(CorpusError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"src_lang\":\"en\",\"tgt_lang\":\"xx\",\"source\":\"s\",\"reference\":null,\"score\":1}\n",
        )
        .unwrap();
        assert!(matches!(
            read_jsonl::<Segment>(&path),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }
}
