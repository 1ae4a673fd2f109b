use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate_system, greedy_hypotheses, EvalError};
use crate::corpus::Corpus;
use crate::metrics::MetricScorer;
use crate::prefbuild::{Level, QualityGrid};
use crate::toymt::ToyModel;
use crate::train::{train, ObjectiveKind, TrainConfig, TrainError, TrainExample};

#[derive(Debug, Clone, PartialEq)]
pub struct GridExperimentConfig {
    /// Training settings shared by all nine runs; the objective is forced to CPO.
    pub train: TrainConfig,
    pub max_len: usize,
    pub pivot: String,
    pub workers: usize,
}

/// Post-CPO test scores on the alignment metric, `matrix[chosen][rejected]`
/// indexed Low, Mid, High. Cells without pairs stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridExperiment {
    pub metric: String,
    pub base_score: f64,
    pub matrix: [[Option<f64>; 3]; 3],
    pub stats_csv: String,
}

fn level_index(l: Level) -> usize {
    match l {
        Level::Low => 0,
        Level::Mid => 1,
        Level::High => 2,
    }
}

impl GridExperiment {
    /// Highest-scoring cell as `(chosen, rejected, score)`; ties go to the first in row-major order.
    pub fn best_cell(&self) -> Option<(Level, Level, f64)> {
        let mut best: Option<(Level, Level, f64)> = None;
        for c in Level::ALL {
            for r in Level::ALL {
                if let Some(v) = self.matrix[level_index(c)][level_index(r)] {
                    if best.is_none_or(|b| v > b.2) {
                        best = Some((c, r, v));
                    }
                }
            }
        }
        best
    }

    /// Rows are chosen levels, columns rejected levels.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("chosen\\rejected,Low,Mid,High\n");
        for c in Level::ALL {
            let cells: Vec<String> = self.matrix[level_index(c)]
                .iter()
                .map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_default())
                .collect();
            out.push_str(&format!("{c},{}\n", cells.join(",")));
        }
        out
    }
}

/// Trains one CPO model per grid cell from `base` and scores greedy output on `test`.
///
/// `sources` supplies the source text of every segment the grid pairs refer to.
pub fn run_quality_grid_experiment(
    base: &ToyModel,
    grid: &QualityGrid,
    sources: &Corpus,
    test: &Corpus,
    scorer: Arc<dyn MetricScorer>,
    cfg: &GridExperimentConfig,
) -> Result<GridExperiment, EvalError> {
    let metric = scorer.metric().name.clone();
    let mut tc = cfg.train.clone();
    tc.objective = ObjectiveKind::Cpo;
    let score = |model: &ToyModel| -> Result<f64, EvalError> {
        let hyps = greedy_hypotheses(model, test, cfg.max_len, 1)?;
        let report = evaluate_system(
            "grid",
            &hyps,
            test,
            std::slice::from_ref(&scorer),
            &cfg.pivot,
            1,
        )?;
        Ok(report.overall[&metric])
    };
    let run_cell = |i: usize| -> Result<Option<f64>, EvalError> {
        let cell = &grid.cells[i];
        if cell.pairs.is_empty() {
            return Ok(None);
        }
        let examples = cell
            .pairs
            .iter()
            .map(|p| {
                let seg = sources.get(&p.segment_id).ok_or_else(|| {
                    TrainError::Config(format!("pair refers to unknown segment `{}`", p.segment_id))
                })?;
                Ok(TrainExample::pair(
                    &seg.source,
                    &p.chosen.text,
                    &p.rejected.text,
                ))
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        let mut model = base.clone();
        train(&mut model, &examples, &tc)?;
        score(&model).map(Some)
    };
    let results: Vec<Option<f64>> = if cfg.workers <= 1 {
        (0..grid.cells.len())
            .map(run_cell)
            .collect::<Result<_, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| EvalError::Mismatch(e.to_string()))?
            .install(|| {
                (0..grid.cells.len())
                    .into_par_iter()
                    .map(run_cell)
                    .collect::<Result<_, _>>()
            })?
    };
    let mut matrix = [[None; 3]; 3];
    for (cell, v) in grid.cells.iter().zip(results) {
        matrix[level_index(cell.chosen_level)][level_index(cell.rejected_level)] = v;
    }
    let base_score = score(base)?;
    Ok(GridExperiment {
        metric,
        base_score,
        matrix,
        stats_csv: grid.stats_csv(),
    })
}
