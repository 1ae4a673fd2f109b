use serde::{Deserialize, Serialize};

use super::{PrefBuildError, Scores};
use crate::corpus::{Candidate, CandidateSet, PreferencePair, SystemId};

/// Sampled candidates sorted by ascending score, and where the base output falls.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidates {
    pub segment_id: String,
    /// Ascending by score; equal scores keep their original sample order.
    pub sorted: Vec<(Candidate, f64)>,
    pub base: (Candidate, f64),
    /// `1 + number of sampled candidates scoring strictly below the base`, in `1..=K+1`.
    pub base_rank: usize,
}

impl RankedCandidates {
    pub fn k(&self) -> usize {
        self.sorted.len()
    }
}

pub fn rank_candidates(
    segment_id: impl Into<String>,
    sampled: &[(Candidate, f64)],
    base: (Candidate, f64),
) -> Result<RankedCandidates, PrefBuildError> {
    let segment_id = segment_id.into();
    if sampled.is_empty() {
        return Err(PrefBuildError::NoSamples(segment_id));
    }
    let mut sorted = sampled.to_vec();
    // stable: equal scores stay in sample order
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let base_rank = 1 + sorted.iter().filter(|(_, s)| *s < base.1).count();
    Ok(RankedCandidates {
        segment_id,
        sorted,
        base,
        base_rank,
    })
}

/// Ranks the sampled candidates of a pool against its base-greedy candidate.
pub fn ranked_from_set(
    cs: &CandidateSet,
    scores: &Scores,
) -> Result<RankedCandidates, PrefBuildError> {
    let score_of = |c: &Candidate| {
        scores
            .get(&c.system)
            .copied()
            .ok_or_else(|| PrefBuildError::MissingScore {
                segment_id: cs.segment_id().to_string(),
                system: c.system.to_string(),
            })
    };
    let base = cs
        .get(&SystemId::BaseGreedy)
        .ok_or_else(|| PrefBuildError::MissingSystem {
            segment_id: cs.segment_id().to_string(),
            system: SystemId::BaseGreedy.to_string(),
        })?;
    let mut sampled: Vec<(u32, Candidate, f64)> = Vec::new();
    for c in cs.candidates() {
        if let SystemId::Sampled(k) = c.system {
            sampled.push((k, c.clone(), score_of(c)?));
        }
    }
    sampled.sort_by_key(|(k, _, _)| *k);
    let sampled: Vec<(Candidate, f64)> = sampled.into_iter().map(|(_, c, s)| (c, s)).collect();
    rank_candidates(cs.segment_id(), &sampled, (base.clone(), score_of(base)?))
}

/// Rejected offset `o_r` and chosen offset `o_c`, both at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OffsetConfig {
    pub o_r: usize,
    pub o_c: usize,
}

impl OffsetConfig {
    pub fn new(o_r: usize, o_c: usize) -> Result<Self, PrefBuildError> {
        let cfg = Self { o_r, o_c };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PrefBuildError> {
        if self.o_r == 0 || self.o_c == 0 {
            return Err(PrefBuildError::Parameter(format!(
                "offsets must be at least 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// 1-based `(chosen, rejected)` positions in `rc.sorted` if the pair
/// satisfies `rejected < base < chosen` strictly.
///
/// `chosen = min(K, b + o_c − 1)` so that `o_c = 1` picks the first sample at
/// or above the base; `rejected = max(1, b − o_r)`.
pub fn mono_indices(rc: &RankedCandidates, cfg: OffsetConfig) -> Option<(usize, usize)> {
    let k = rc.k();
    let b = rc.base_rank;
    let chosen = (b + cfg.o_c - 1).min(k);
    let rejected = b.saturating_sub(cfg.o_r).max(1);
    let base = rc.base.1;
    (rc.sorted[rejected - 1].1 < base && base < rc.sorted[chosen - 1].1)
        .then_some((chosen, rejected))
}

pub fn build_mono_offset(
    rc: &RankedCandidates,
    cfg: OffsetConfig,
    metric: &str,
    builder: &str,
) -> Result<Option<PreferencePair>, PrefBuildError> {
    let Some((c, r)) = mono_indices(rc, cfg) else {
        return Ok(None);
    };
    let chosen = rc.sorted[c - 1].clone();
    let rejected = rc.sorted[r - 1].clone();
    Ok(Some(PreferencePair::new(
        &rc.segment_id,
        chosen,
        rejected,
        metric,
        builder,
    )?))
}

/// Result of an offset search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub config: OffsetConfig,
    pub achieved_chosen: f64,
    pub achieved_rejected: f64,
    /// `|achieved_chosen − target_chosen| + |achieved_rejected − target_rejected|`.
    pub deviation: f64,
    pub n_emitted: usize,
    pub n_discarded: usize,
}

/// Averages of chosen and rejected scores over the pairs `cfg` emits.
pub(crate) fn achieved(pool: &[RankedCandidates], cfg: OffsetConfig) -> Option<(f64, f64, usize)> {
    let (mut sc, mut sr, mut n) = (0.0, 0.0, 0usize);
    for rc in pool {
        if let Some((c, r)) = mono_indices(rc, cfg) {
            sc += rc.sorted[c - 1].1;
            sr += rc.sorted[r - 1].1;
            n += 1;
        }
    }
    (n > 0).then(|| (sc / n as f64, sr / n as f64, n))
}

/// Exhaustive search over `o_r, o_c ∈ [1, K]` (K = largest pool size) for the
/// configuration whose emitted pairs come closest to the target averages;
/// ties go to the lexicographically smaller `(o_r, o_c)`.
pub fn calibrate_offsets(
    pool: &[RankedCandidates],
    target_chosen: f64,
    target_rejected: f64,
) -> Result<Calibration, PrefBuildError> {
    if pool.is_empty() {
        return Err(PrefBuildError::Parameter(
            "calibration pool is empty".into(),
        ));
    }
    if !target_chosen.is_finite() || !target_rejected.is_finite() {
        return Err(PrefBuildError::Parameter("targets must be finite".into()));
    }
    let k = pool.iter().map(RankedCandidates::k).max().unwrap_or(0);
    let mut best: Option<Calibration> = None;
    for o_r in 1..=k {
        for o_c in 1..=k {
            let cfg = OffsetConfig { o_r, o_c };
            let Some((ac, ar, n)) = achieved(pool, cfg) else {
                continue;
            };
            let deviation = (ac - target_chosen).abs() + (ar - target_rejected).abs();
            if best.as_ref().is_none_or(|b| deviation < b.deviation) {
                best = Some(Calibration {
                    config: cfg,
                    achieved_chosen: ac,
                    achieved_rejected: ar,
                    deviation,
                    n_emitted: n,
                    n_discarded: pool.len() - n,
                });
            }
        }
    }
    best.ok_or(PrefBuildError::NoSolution)
}
