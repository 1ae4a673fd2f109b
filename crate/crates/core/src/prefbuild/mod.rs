//! Preference-pair builders: multi-system (with system ablation), fixed-chosen,
//! mono-system offsets, offset calibration and the 3×3 quality grid.

mod grid;
mod mono;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::corpus::{
    Candidate, CandidateSet, CorpusError, PreferencePair, ScoredCandidates, SystemId,
};

pub use grid::{
    build_grid, build_quality_grid, emits, grid_builder_tag, resolve_offsets, GridCell,
    GridResolution, Level, QualityGrid,
};
pub use mono::{
    build_mono_offset, calibrate_offsets, mono_indices, rank_candidates, ranked_from_set,
    Calibration, OffsetConfig, RankedCandidates,
};

#[derive(Debug, Error)]
pub enum PrefBuildError {
    #[error("segment `{segment_id}`: no score for system `{system}`")]
    MissingScore { segment_id: String, system: String },
    #[error("segment `{segment_id}`: system `{system}` is not in the candidate set")]
    MissingSystem { segment_id: String, system: String },
    #[error("segment `{0}`: no sampled candidates")]
    NoSamples(String),
    #[error("segment `{segment_id}`: {scores} scores for {candidates} candidates")]
    ScoreCount {
        segment_id: String,
        scores: usize,
        candidates: usize,
    },
    #[error("no offset configuration emits any pair")]
    NoSolution,
    #[error("invalid builder parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Scores = HashMap<SystemId, f64>;

/// Maps a score record (one score per candidate, in candidate order) onto systems.
pub fn scores_for(cs: &CandidateSet, scored: &ScoredCandidates) -> Result<Scores, PrefBuildError> {
    if scored.segment_id != cs.segment_id() || scored.scores.len() != cs.candidates().len() {
        return Err(PrefBuildError::ScoreCount {
            segment_id: cs.segment_id().to_string(),
            scores: scored.scores.len(),
            candidates: cs.candidates().len(),
        });
    }
    Ok(cs
        .candidates()
        .iter()
        .zip(&scored.scores)
        .map(|(c, &s)| (c.system.clone(), s))
        .collect())
}

/// Tie-break rank among systems; lower wins: reference, external systems by
/// name, base greedy, then samples by index.
pub fn system_priority(system: &SystemId) -> (u8, String, u32) {
    match system {
        SystemId::Reference => (0, String::new(), 0),
        SystemId::External(name) => (1, name.clone(), 0),
        SystemId::BaseGreedy => (2, String::new(), 0),
        SystemId::Sampled(k) => (3, String::new(), *k),
    }
}

fn scored<'a>(
    cs: &'a CandidateSet,
    scores: &Scores,
) -> Result<Vec<(&'a Candidate, f64)>, PrefBuildError> {
    cs.candidates()
        .iter()
        .map(|c| {
            scores
                .get(&c.system)
                .map(|&s| (c, s))
                .ok_or_else(|| PrefBuildError::MissingScore {
                    segment_id: cs.segment_id().to_string(),
                    system: c.system.to_string(),
                })
        })
        .collect()
}

/// Highest (or lowest) scoring candidate; system priority breaks ties.
fn extreme<'a>(items: &[(&'a Candidate, f64)], higher: bool) -> (&'a Candidate, f64) {
    let mut best = items[0];
    for &item in &items[1..] {
        let strictly = if higher {
            item.1 > best.1
        } else {
            item.1 < best.1
        };
        let tie_wins =
            item.1 == best.1 && system_priority(&item.0.system) < system_priority(&best.0.system);
        if strictly || tie_wins {
            best = item;
        }
    }
    best
}

/// Chosen = highest score, rejected = lowest score; `None` when they are equal.
pub fn build_multi_system(
    cs: &CandidateSet,
    scores: &Scores,
    metric: &str,
    builder: &str,
) -> Result<Option<PreferencePair>, PrefBuildError> {
    let items = scored(cs, scores)?;
    let (c, cs_score) = extreme(&items, true);
    let (r, r_score) = extreme(&items, false);
    if cs_score <= r_score {
        return Ok(None);
    }
    Ok(Some(PreferencePair::new(
        cs.segment_id(),
        (c.clone(), cs_score),
        (r.clone(), r_score),
        metric,
        builder,
    )?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Restricted {
    Usable(CandidateSet),
    /// Fewer than two candidates remain; the segment is skipped.
    Unusable {
        segment_id: String,
        remaining: Vec<Candidate>,
    },
}

pub fn restrict_systems(cs: &CandidateSet, excluded: &BTreeSet<SystemId>) -> Restricted {
    let remaining: Vec<Candidate> = cs
        .candidates()
        .iter()
        .filter(|c| !excluded.contains(&c.system))
        .cloned()
        .collect();
    if remaining.len() < 2 {
        return Restricted::Unusable {
            segment_id: cs.segment_id().to_string(),
            remaining,
        };
    }
    Restricted::Usable(
        CandidateSet::new(cs.segment_id(), remaining).expect("a subset of a valid set is valid"),
    )
}

/// Chosen is fixed to `chosen_system`; rejected is the lowest-scoring other
/// system if it is strictly below the chosen score.
pub fn build_fixed_chosen(
    cs: &CandidateSet,
    scores: &Scores,
    chosen_system: &SystemId,
    metric: &str,
    builder: &str,
) -> Result<Option<PreferencePair>, PrefBuildError> {
    let items = scored(cs, scores)?;
    let chosen = items
        .iter()
        .find(|(c, _)| &c.system == chosen_system)
        .copied()
        .ok_or_else(|| PrefBuildError::MissingSystem {
            segment_id: cs.segment_id().to_string(),
            system: chosen_system.to_string(),
        })?;
    let others: Vec<(&Candidate, f64)> = items
        .iter()
        .filter(|(c, _)| &c.system != chosen_system)
        .copied()
        .collect();
    if others.is_empty() {
        return Ok(None);
    }
    let (r, r_score) = extreme(&others, false);
    if r_score >= chosen.1 {
        return Ok(None);
    }
    Ok(Some(PreferencePair::new(
        cs.segment_id(),
        (chosen.0.clone(), chosen.1),
        (r.clone(), r_score),
        metric,
        builder,
    )?))
}

/// Pairs emitted by a builder run plus the number of inputs that produced none.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildOutcome {
    pub pairs: Vec<PreferencePair>,
    pub n_discarded: usize,
}

impl BuildOutcome {
    fn push(&mut self, pair: Option<PreferencePair>) {
        match pair {
            Some(p) => self.pairs.push(p),
            None => self.n_discarded += 1,
        }
    }
}

/// Multi-system building over many segments, optionally without some systems.
pub fn build_multi_dataset(
    sets: &[(CandidateSet, Scores)],
    excluded: &BTreeSet<SystemId>,
    metric: &str,
    builder: &str,
) -> Result<BuildOutcome, PrefBuildError> {
    let mut out = BuildOutcome::default();
    for (cs, scores) in sets {
        match restrict_systems(cs, excluded) {
            Restricted::Usable(r) => out.push(build_multi_system(&r, scores, metric, builder)?),
            Restricted::Unusable { .. } => out.n_discarded += 1,
        }
    }
    Ok(out)
}

pub fn build_fixed_chosen_dataset(
    sets: &[(CandidateSet, Scores)],
    chosen_system: &SystemId,
    metric: &str,
    builder: &str,
) -> Result<BuildOutcome, PrefBuildError> {
    let mut out = BuildOutcome::default();
    for (cs, scores) in sets {
        out.push(build_fixed_chosen(
            cs,
            scores,
            chosen_system,
            metric,
            builder,
        )?);
    }
    Ok(out)
}

pub fn build_mono_dataset(
    pool: &[RankedCandidates],
    cfg: OffsetConfig,
    metric: &str,
    builder: &str,
) -> Result<BuildOutcome, PrefBuildError> {
    cfg.validate()?;
    let mut out = BuildOutcome::default();
    for rc in pool {
        out.push(build_mono_offset(rc, cfg, metric, builder)?);
    }
    Ok(out)
}
