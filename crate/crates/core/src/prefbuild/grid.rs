//! Chosen × rejected quality grid over a mono-system candidate pool.
//!
//! Each role's Low/Mid/High buckets resolve to offsets. Offsets are either
//! given directly or calibrated per role: for every offset we compute the
//! average score of the candidate it selects over the segments where that
//! candidate is strictly on the right side of the base output, then pick
//! strictly ordered offsets whose averages are closest to the bucket targets.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::mono::{mono_indices, OffsetConfig, RankedCandidates};
use super::{build_mono_dataset, PrefBuildError};
use crate::corpus::PreferencePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Mid,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Mid, Level::High];

    pub fn label(self) -> &'static str {
        match self {
            Level::Low => "Low",
            Level::Mid => "Mid",
            Level::High => "High",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How bucket levels become offsets. Arrays are indexed Low, Mid, High.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridResolution {
    /// Targets at 1/6, 1/2 and 5/6 of each role's achievable average range.
    Auto,
    Targets {
        chosen: [f64; 3],
        rejected: [f64; 3],
    },
    Offsets {
        chosen: [usize; 3],
        rejected: [usize; 3],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub chosen_level: Level,
    pub rejected_level: Level,
    pub offsets: OffsetConfig,
    pub builder: String,
    pub pairs: Vec<PreferencePair>,
    pub n_discarded: usize,
}

impl GridCell {
    pub fn avg_chosen(&self) -> Option<f64> {
        (!self.pairs.is_empty()).then(|| {
            self.pairs.iter().map(|p| p.chosen_score).sum::<f64>() / self.pairs.len() as f64
        })
    }

    pub fn avg_rejected(&self) -> Option<f64> {
        (!self.pairs.is_empty()).then(|| {
            self.pairs.iter().map(|p| p.rejected_score).sum::<f64>() / self.pairs.len() as f64
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityGrid {
    /// Row-major: chosen level outer, rejected level inner.
    pub cells: Vec<GridCell>,
    pub chosen_offsets: Vec<(Level, usize)>,
    pub rejected_offsets: Vec<(Level, usize)>,
}

impl QualityGrid {
    pub fn cell(&self, chosen: Level, rejected: Level) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.chosen_level == chosen && c.rejected_level == rejected)
    }

    /// `chosen_level,rejected_level,avg_chosen,avg_rejected,n_pairs,n_discarded`; empty averages for empty cells.
    pub fn stats_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from(
            "chosen_level,rejected_level,avg_chosen,avg_rejected,n_pairs,n_discarded\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.chosen_level,
                c.rejected_level,
                fmt(c.avg_chosen()),
                fmt(c.avg_rejected()),
                c.pairs.len(),
                c.n_discarded
            ));
        }
        out
    }
}

pub fn grid_builder_tag(chosen: Level, rejected: Level) -> String {
    format!(
        "grid:chosen-{}:rejected-{}",
        chosen.label().to_lowercase(),
        rejected.label().to_lowercase()
    )
}

/// Average score of the candidate selected by offset `o` for one role, over
/// segments where it lies strictly beyond the base output.
fn marginal(pool: &[RankedCandidates], o: usize, chosen_role: bool) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for rc in pool {
        let k = rc.k();
        let b = rc.base_rank;
        let (idx, ok) = if chosen_role {
            let i = (b + o - 1).min(k);
            (i, rc.sorted[i - 1].1 > rc.base.1)
        } else {
            let i = b.saturating_sub(o).max(1);
            (i, rc.sorted[i - 1].1 < rc.base.1)
        };
        if ok {
            sum += rc.sorted[idx - 1].1;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Strictly increasing offset triple `(low, mid, high)` in `1..=k` whose
/// curve values best match `targets`; ties go to the lexicographically smallest.
fn best_increasing_triple(curve: &[Option<f64>], targets: [f64; 3]) -> Option<[usize; 3]> {
    let k = curve.len();
    let mut best: Option<([usize; 3], f64)> = None;
    for a in 1..=k {
        for b in a + 1..=k {
            for c in b + 1..=k {
                let (Some(va), Some(vb), Some(vc)) = (curve[a - 1], curve[b - 1], curve[c - 1])
                else {
                    continue;
                };
                let dev =
                    (va - targets[0]).abs() + (vb - targets[1]).abs() + (vc - targets[2]).abs();
                if best.is_none_or(|(_, d)| dev < d) {
                    best = Some(([a, b, c], dev));
                }
            }
        }
    }
    best.map(|(t, _)| t)
}

fn auto_targets(curve: &[Option<f64>]) -> Option<[f64; 3]> {
    let vals: Vec<f64> = curve.iter().flatten().copied().collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (!vals.is_empty()).then(|| {
        [
            lo + (hi - lo) / 6.0,
            lo + (hi - lo) / 2.0,
            lo + 5.0 * (hi - lo) / 6.0,
        ]
    })
}

/// Resolves Low/Mid/High offsets for both roles; arrays are indexed Low, Mid, High.
pub fn resolve_offsets(
    pool: &[RankedCandidates],
    resolution: &GridResolution,
) -> Result<([usize; 3], [usize; 3]), PrefBuildError> {
    let k = pool.iter().map(RankedCandidates::k).max().unwrap_or(0);
    match resolution {
        GridResolution::Offsets { chosen, rejected } => {
            let ok_c = chosen[0] >= 1 && chosen[0] < chosen[1] && chosen[1] < chosen[2];
            let ok_r = rejected[2] >= 1 && rejected[2] < rejected[1] && rejected[1] < rejected[0];
            if !ok_c || !ok_r {
                return Err(PrefBuildError::Parameter(format!(
                    "grid offsets must be positive and strictly ordered (chosen increasing Low→High, rejected decreasing Low→High), got chosen {chosen:?}, rejected {rejected:?}"
                )));
            }
            Ok((*chosen, *rejected))
        }
        _ => {
            if k < 3 {
                return Err(PrefBuildError::Parameter(
                    "grid calibration needs at least 3 samples per segment".into(),
                ));
            }
            let c_curve: Vec<Option<f64>> = (1..=k).map(|o| marginal(pool, o, true)).collect();
            // rejected curve indexed by o_r; the Low bucket uses the largest offset
            let r_curve: Vec<Option<f64>> = (1..=k).map(|o| marginal(pool, o, false)).collect();
            let (tc, tr) = match resolution {
                GridResolution::Targets { chosen, rejected } => (*chosen, *rejected),
                _ => (
                    auto_targets(&c_curve).ok_or(PrefBuildError::NoSolution)?,
                    auto_targets(&r_curve).ok_or(PrefBuildError::NoSolution)?,
                ),
            };
            let chosen = best_increasing_triple(&c_curve, tc).ok_or(PrefBuildError::NoSolution)?;
            // increasing o_r gives decreasing rejected quality: match (High, Mid, Low)
            let r = best_increasing_triple(&r_curve, [tr[2], tr[1], tr[0]])
                .ok_or(PrefBuildError::NoSolution)?;
            Ok((chosen, [r[2], r[1], r[0]]))
        }
    }
}

/// Grid over arbitrary level → offset lists (the quality grid uses all three levels per role).
pub fn build_grid(
    pool: &[RankedCandidates],
    chosen_offsets: &[(Level, usize)],
    rejected_offsets: &[(Level, usize)],
    metric: &str,
) -> Result<QualityGrid, PrefBuildError> {
    let mut cells = Vec::with_capacity(chosen_offsets.len() * rejected_offsets.len());
    for &(cl, o_c) in chosen_offsets {
        for &(rl, o_r) in rejected_offsets {
            let offsets = OffsetConfig::new(o_r, o_c)?;
            let builder = grid_builder_tag(cl, rl);
            let out = build_mono_dataset(pool, offsets, metric, &builder)?;
            cells.push(GridCell {
                chosen_level: cl,
                rejected_level: rl,
                offsets,
                builder,
                pairs: out.pairs,
                n_discarded: out.n_discarded,
            });
        }
    }
    Ok(QualityGrid {
        cells,
        chosen_offsets: chosen_offsets.to_vec(),
        rejected_offsets: rejected_offsets.to_vec(),
    })
}

/// Nine mono-system datasets, one per (chosen level, rejected level).
pub fn build_quality_grid(
    pool: &[RankedCandidates],
    resolution: &GridResolution,
    metric: &str,
) -> Result<QualityGrid, PrefBuildError> {
    if pool.is_empty() {
        return Err(PrefBuildError::Parameter("grid pool is empty".into()));
    }
    let (c, r) = resolve_offsets(pool, resolution)?;
    let chosen: Vec<(Level, usize)> = Level::ALL.iter().copied().zip(c).collect();
    let rejected: Vec<(Level, usize)> = Level::ALL.iter().copied().zip(r).collect();
    build_grid(pool, &chosen, &rejected, metric)
}

/// Whether `cfg` would emit a pair for `rc`; exposed for grid diagnostics.
pub fn emits(rc: &RankedCandidates, cfg: OffsetConfig) -> bool {
    mono_indices(rc, cfg).is_some()
}
