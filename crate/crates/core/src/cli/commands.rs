use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, TrainData};
use super::manifest::{read_bytes, verify_input, write_bytes, StageRun};
use super::{CliError, Objective, Regime};
use crate::corpus::{
    dataset_stats, generate_with, read_jsonl, write_jsonl, Candidate, CandidateSet, Corpus,
    DatasetMetadata, HypothesisRecord, PreferenceDataset, PreferencePair, ScoredCandidates,
    Segment, SyntheticCorpusSpec, SystemId,
};
use crate::eval::{
    compare_report, evaluate_system, greedy_hypotheses, run_quality_grid_experiment, EvalReport,
    GridExperimentConfig,
};
use crate::metrics::{score_parallel, scorer_by_name, MetricScorer, ScoreRequest};
use crate::prefbuild::{
    build_fixed_chosen_dataset, build_mono_dataset, build_multi_dataset, build_quality_grid,
    calibrate_offsets, ranked_from_set, scores_for, BuildOutcome, GridCell, Level, OffsetConfig,
    QualityGrid, RankedCandidates, Scores,
};
use crate::toymt::{
    generate_candidates, greedy_decode, load_checkpoint, save_checkpoint, ToyModel,
};
use crate::train::{
    examples_from_preferences, examples_from_references, train, ObjectiveKind, TrainExample,
};

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(Corpus::new(read_jsonl::<Segment>(path)?)?)
}

fn load_candidates(path: &Path) -> Result<Vec<CandidateSet>, CliError> {
    Ok(read_jsonl::<CandidateSet>(path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(&read_bytes(path)?)
        .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
}

fn scorer(cfg: &RunConfig, name: &str) -> Result<std::sync::Arc<dyn MetricScorer>, CliError> {
    Ok(scorer_by_name(name, cfg.external_config().as_ref())?)
}

fn check_name(kind: &str, name: &str) -> Result<(), CliError> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
    {
        return Err(CliError::Config(format!(
            "{kind} name `{name}` must be non-empty [A-Za-z0-9._-]"
        )));
    }
    Ok(())
}

pub fn gen_corpus(cfg: &RunConfig) -> Result<String, CliError> {
    let c = &cfg.corpus;
    let seed = cfg.stage_seed(c.seed, "corpus");
    let mut run = StageRun::new(cfg, "gen-corpus");
    run.seed("corpus", seed);
    let mut lines = Vec::new();
    for (path, n, offset, prefix) in [
        (&cfg.paths.corpus, c.n_train, 0, "train"),
        (&cfg.paths.test_corpus, c.n_test, 1, "test"),
        (&cfg.paths.pretrain_corpus, c.n_pretrain, 2, "pre"),
    ] {
        let corpus = generate_with(&SyntheticCorpusSpec {
            task: c.task,
            n,
            noise_rate: c.noise_rate,
            seed: seed.wrapping_add(offset),
            id_prefix: prefix.into(),
            shape: c.shape,
        })?;
        let out = cfg.path(path);
        write_jsonl(&out, corpus.segments())?;
        run.output(&out);
        lines.push(format!("wrote {} ({n} segments)", out.display()));
    }
    run.finish()?;
    Ok(lines.join("\n"))
}

pub fn pretrain(cfg: &RunConfig) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "pretrain");
    let data_path = cfg.path(&cfg.paths.pretrain_corpus);
    run.input(&data_path, &["gen-corpus"])?;
    let corpus = load_corpus(&data_path)?;
    let mc = cfg.model_config();
    let seed = cfg.stage_seed(cfg.pretrain.seed, "pretrain");
    run.seed("model", mc.seed);
    run.seed("train", seed);
    let mut model = ToyModel::init(mc)?;
    let log = train(
        &mut model,
        &examples_from_references(&corpus),
        &cfg.pretrain.to_train_config(ObjectiveKind::Sft, seed),
    )?;
    let ckpt = cfg.path(&cfg.paths.base_model);
    let log_path = cfg.path(&cfg.paths.pretrain_log);
    write_bytes(&log_path, log.to_csv().as_bytes())?;
    save_checkpoint(&model, &ckpt)?;
    run.output(&ckpt);
    run.output(&log_path);
    run.finish()?;
    Ok(format!(
        "wrote {} ({} params, {} steps, final loss {:.4})",
        ckpt.display(),
        model.n_params(),
        log.records.len(),
        log.records.last().map(|r| r.loss).unwrap_or(f64::NAN)
    ))
}

pub fn gen_candidates(cfg: &RunConfig) -> Result<String, CliError> {
    let cc = &cfg.candidates;
    let mut run = StageRun::new(cfg, "gen-candidates");
    let corpus_path = cfg.path(&cfg.paths.corpus);
    let model_path = cfg.path(&cfg.paths.base_model);
    run.input(&corpus_path, &["gen-corpus"])?;
    run.input(&model_path, &["pretrain", "train"])?;
    let corpus = load_corpus(&corpus_path)?;
    let model = load_checkpoint(&model_path)?;
    let mut external: Vec<(String, HashMap<String, String>)> = Vec::new();
    for (name, path) in &cc.external {
        check_name("external system", name)?;
        run.external_input(path)?;
        let hyps: HashMap<String, String> = read_jsonl::<HypothesisRecord>(path)?
            .into_iter()
            .map(|h| (h.segment_id, h.text))
            .collect();
        external.push((name.clone(), hyps));
    }
    let seed = cfg.stage_seed(cc.seed, "candidates");
    run.seed("candidates", seed);
    let stride = cc.k as u64 + 1;
    let build = |(i, seg): (usize, &Segment)| -> Result<CandidateSet, CliError> {
        let mut cands = Vec::new();
        if cc.include_reference {
            if let Some(r) = &seg.reference {
                cands.push(Candidate::new(SystemId::Reference, r.clone()));
            }
        }
        for (name, hyps) in &external {
            let text = hyps.get(&seg.id).ok_or_else(|| {
                CliError::Config(format!(
                    "external system `{name}` has no output for segment `{}`",
                    seg.id
                ))
            })?;
            cands.push(Candidate::new(
                SystemId::External(name.clone()),
                text.clone(),
            ));
        }
        cands.push(Candidate::new(
            SystemId::BaseGreedy,
            greedy_decode(&model, &seg.source, cc.max_len)?,
        ));
        let samples = generate_candidates(
            &model,
            &seg.source,
            cc.k,
            cc.sampling(),
            cc.max_len,
            seed.wrapping_add(i as u64 * stride),
        )?;
        for (k, s) in samples.into_iter().enumerate() {
            cands.push(Candidate::new(SystemId::Sampled(k as u32 + 1), s));
        }
        Ok(CandidateSet::new(&seg.id, cands)?)
    };
    let sets: Vec<CandidateSet> = in_pool(cfg.workers, || {
        corpus
            .segments()
            .par_iter()
            .enumerate()
            .map(build)
            .collect::<Result<Vec<_>, _>>()
    })??;
    let out = cfg.path(&cfg.paths.candidates);
    write_jsonl(&out, &sets)?;
    run.output(&out);
    run.finish()?;
    Ok(format!(
        "wrote {} ({} candidate sets, K = {})",
        out.display(),
        sets.len(),
        cc.k
    ))
}

pub fn score(cfg: &RunConfig) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "score");
    let cand_path = cfg.path(&cfg.paths.candidates);
    let corpus_path = cfg.path(&cfg.paths.corpus);
    run.input(&cand_path, &["gen-candidates"])?;
    run.input(&corpus_path, &["gen-corpus"])?;
    let sets = load_candidates(&cand_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let metric = cfg.scoring.metric.clone();
    run.param("metric", &metric);
    let scorer = scorer(cfg, &metric)?;
    let mut requests = Vec::new();
    for cs in &sets {
        let seg = corpus.get(cs.segment_id()).ok_or_else(|| {
            CliError::Config(format!(
                "candidate set for unknown segment `{}`",
                cs.segment_id()
            ))
        })?;
        for c in cs.candidates() {
            requests.push(ScoreRequest::new(
                &seg.source,
                &c.text,
                seg.reference.clone(),
            ));
        }
    }
    let flat = score_parallel(scorer.as_ref(), &requests, cfg.workers, 256)?;
    let mut it = flat.into_iter();
    let records: Vec<ScoredCandidates> = sets
        .iter()
        .map(|cs| ScoredCandidates {
            segment_id: cs.segment_id().to_string(),
            metric: metric.clone(),
            scores: it.by_ref().take(cs.candidates().len()).collect(),
        })
        .collect();
    let out = cfg.path(&cfg.paths.scores);
    write_jsonl(&out, &records)?;
    run.output(&out);
    run.finish()?;
    Ok(format!(
        "wrote {} ({} scores with {metric})",
        out.display(),
        requests.len()
    ))
}

/// Candidate sets with their per-system scores, plus the metric name.
fn scored_sets(
    run: &mut StageRun<'_>,
    cfg: &RunConfig,
) -> Result<(Vec<(CandidateSet, Scores)>, String), CliError> {
    let cand_path = cfg.path(&cfg.paths.candidates);
    let score_path = cfg.path(&cfg.paths.scores);
    run.input(&cand_path, &["gen-candidates"])?;
    let sm = run.input(&score_path, &["score"])?;
    let sets = load_candidates(&cand_path)?;
    let scores = read_jsonl::<ScoredCandidates>(&score_path)?;
    if sets.len() != scores.len() {
        return Err(CliError::Config(format!(
            "{} candidate sets but {} score records",
            sets.len(),
            scores.len()
        )));
    }
    let metric = sm.params.get("metric").cloned().unwrap_or_default();
    let joined = sets
        .into_iter()
        .zip(&scores)
        .map(|(cs, sc)| {
            let s = scores_for(&cs, sc)?;
            Ok((cs, s))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((joined, metric))
}

fn mono_pool(sets: &[(CandidateSet, Scores)]) -> Result<Vec<RankedCandidates>, CliError> {
    Ok(sets
        .iter()
        .map(|(cs, s)| ranked_from_set(cs, s))
        .collect::<Result<_, _>>()?)
}

fn without_samples(sets: Vec<(CandidateSet, Scores)>) -> Vec<(CandidateSet, Scores)> {
    sets.into_iter()
        .filter_map(|(cs, s)| {
            let kept: Vec<Candidate> = cs
                .candidates()
                .iter()
                .filter(|c| !matches!(c.system, SystemId::Sampled(_)))
                .cloned()
                .collect();
            CandidateSet::new(cs.segment_id(), kept)
                .ok()
                .map(|c| (c, s))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct DatasetSummary<'a> {
    metadata: &'a DatasetMetadata,
    n_pairs: usize,
    n_discarded: usize,
    stats: Option<crate::corpus::DatasetStats>,
}

fn pairs_file(dir: &Path, c: Level, r: Level) -> PathBuf {
    dir.join(format!(
        "{}-{}.jsonl",
        c.label().to_lowercase(),
        r.label().to_lowercase()
    ))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridIndexCell {
    chosen_level: Level,
    rejected_level: Level,
    offsets: OffsetConfig,
    builder: String,
    file: String,
    n_pairs: usize,
    n_discarded: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridIndex {
    metric: String,
    chosen_offsets: Vec<(Level, usize)>,
    rejected_offsets: Vec<(Level, usize)>,
    cells: Vec<GridIndexCell>,
}

pub fn build_prefs(cfg: &RunConfig, regime: Regime) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "build-prefs");
    run.param("regime", regime.name());
    let (sets, metric) = scored_sets(&mut run, cfg)?;
    let corpus_path = cfg.path(&cfg.paths.corpus);
    run.input(&corpus_path, &["gen-corpus"])?;
    let corpus = load_corpus(&corpus_path)?;
    let p = &cfg.prefs;
    let builder = regime.name().to_string();
    let mut params = BTreeMap::new();
    let outcome: BuildOutcome = match regime {
        Regime::Multi | Regime::MultiAblate => {
            let excluded: BTreeSet<SystemId> = if regime == Regime::MultiAblate {
                p.exclude
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<_, _>>()?
            } else {
                BTreeSet::new()
            };
            params.insert(
                "exclude".into(),
                serde_json::json!(excluded.iter().map(|s| s.to_string()).collect::<Vec<_>>()),
            );
            params.insert(
                "include_samples".into(),
                serde_json::json!(p.multi_include_samples),
            );
            let sets = if p.multi_include_samples {
                sets
            } else {
                without_samples(sets)
            };
            build_multi_dataset(&sets, &excluded, &metric, &builder)?
        }
        Regime::FixedChosen => {
            let chosen: SystemId = p.chosen_system.parse()?;
            params.insert(
                "chosen_system".into(),
                serde_json::json!(chosen.to_string()),
            );
            build_fixed_chosen_dataset(&sets, &chosen, &metric, &builder)?
        }
        Regime::MonoOffset => {
            let offsets = OffsetConfig::new(p.o_r, p.o_c)?;
            params.insert("o_r".into(), serde_json::json!(p.o_r));
            params.insert("o_c".into(), serde_json::json!(p.o_c));
            build_mono_dataset(&mono_pool(&sets)?, offsets, &metric, &builder)?
        }
        Regime::Grid => {
            let grid = build_quality_grid(&mono_pool(&sets)?, &p.grid, &metric)?;
            let dir = cfg.path(&cfg.paths.grid_dir);
            let mut cells = Vec::new();
            for cell in &grid.cells {
                let path = pairs_file(&dir, cell.chosen_level, cell.rejected_level);
                write_jsonl(&path, &cell.pairs)?;
                run.output(&path);
                cells.push(GridIndexCell {
                    chosen_level: cell.chosen_level,
                    rejected_level: cell.rejected_level,
                    offsets: cell.offsets,
                    builder: cell.builder.clone(),
                    file: path
                        .file_name()
                        .expect("cell files have names")
                        .to_string_lossy()
                        .into_owned(),
                    n_pairs: cell.pairs.len(),
                    n_discarded: cell.n_discarded,
                });
            }
            let index = GridIndex {
                metric: metric.clone(),
                chosen_offsets: grid.chosen_offsets.clone(),
                rejected_offsets: grid.rejected_offsets.clone(),
                cells,
            };
            let index_path = dir.join("grid.json");
            write_json(&index_path, &index)?;
            let stats_path = dir.join("stats.csv");
            write_bytes(&stats_path, grid.stats_csv().as_bytes())?;
            run.output(&index_path);
            run.output(&stats_path);
            run.finish()?;
            return Ok(format!(
                "wrote {} (9 datasets)\n{}",
                dir.display(),
                grid.stats_csv().trim_end()
            ));
        }
    };
    let metadata = DatasetMetadata {
        metric: metric.clone(),
        builder,
        params,
    };
    let ds = PreferenceDataset::new(outcome.pairs, metadata)?;
    let out = cfg.path(&cfg.paths.prefs);
    write_jsonl(&out, &ds.pairs)?;
    let stats = if ds.is_empty() {
        None
    } else {
        Some(dataset_stats(&ds, &corpus)?)
    };
    let summary = DatasetSummary {
        metadata: &ds.metadata,
        n_pairs: ds.len(),
        n_discarded: outcome.n_discarded,
        stats,
    };
    let stats_path = out.with_extension("stats.json");
    write_json(&stats_path, &summary)?;
    run.output(&out);
    run.output(&stats_path);
    run.finish()?;
    Ok(format!(
        "wrote {} ({} pairs, {} discarded)",
        out.display(),
        ds.len(),
        outcome.n_discarded
    ))
}

pub fn calibrate(
    cfg: &RunConfig,
    chosen: Option<f64>,
    rejected: Option<f64>,
) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "calibrate");
    let tc = chosen.or(cfg.prefs.target_chosen);
    let tr = rejected.or(cfg.prefs.target_rejected);
    let (Some(tc), Some(tr)) = (tc, tr) else {
        return Err(CliError::Config(
            "calibrate needs targets: prefs.target_chosen and prefs.target_rejected (or --target-chosen/--target-rejected)".into(),
        ));
    };
    run.param("target_chosen", tc.to_string());
    run.param("target_rejected", tr.to_string());
    let (sets, metric) = scored_sets(&mut run, cfg)?;
    let cal = calibrate_offsets(&mono_pool(&sets)?, tc, tr)?;
    let out = cfg.path(&cfg.paths.calibration);
    write_json(
        &out,
        &serde_json::json!({ "metric": metric, "target_chosen": tc, "target_rejected": tr, "calibration": cal }),
    )?;
    run.output(&out);
    run.finish()?;
    Ok(format!(
        "wrote {}: o_r = {}, o_c = {}, achieved chosen {:.3} / rejected {:.3} over {} pairs",
        out.display(),
        cal.config.o_r,
        cal.config.o_c,
        cal.achieved_chosen,
        cal.achieved_rejected,
        cal.n_emitted
    ))
}

pub fn train_cmd(cfg: &RunConfig, objective: Objective) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "train");
    let kind = objective.kind();
    run.param("objective", objective.name());
    let base_path = cfg.path(&cfg.paths.base_model);
    let corpus_path = cfg.path(&cfg.paths.corpus);
    run.input(&base_path, &["pretrain"])?;
    run.input(&corpus_path, &["gen-corpus"])?;
    let corpus = load_corpus(&corpus_path)?;
    let examples: Vec<TrainExample> = match cfg.train.data {
        TrainData::References => {
            if kind == ObjectiveKind::Cpo {
                return Err(CliError::Config(
                    "cpo needs preference pairs; set train.data = \"prefs\"".into(),
                ));
            }
            run.param("data", "references");
            examples_from_references(&corpus)
        }
        TrainData::Prefs => {
            let prefs_path = cfg.path(&cfg.paths.prefs);
            let m = run.input(&prefs_path, &["build-prefs"])?;
            run.param(
                "data",
                format!(
                    "prefs:{}",
                    m.params.get("regime").map(String::as_str).unwrap_or("?")
                ),
            );
            let pairs = read_jsonl::<PreferencePair>(&prefs_path)?;
            let ds = PreferenceDataset::new(pairs, DatasetMetadata::default())?;
            let ex = examples_from_preferences(&ds, &corpus)?;
            match kind {
                ObjectiveKind::Cpo => ex,
                ObjectiveKind::Sft => ex
                    .into_iter()
                    .map(|e| TrainExample::sft(e.source, e.chosen))
                    .collect(),
            }
        }
    };
    if examples.is_empty() {
        return Err(CliError::Config("no training examples".into()));
    }
    let seed = cfg.stage_seed(cfg.train.seed, "train");
    run.seed("train", seed);
    let mut model = load_checkpoint(&base_path)?;
    let log = train(
        &mut model,
        &examples,
        &cfg.train.to_train_config(kind, seed),
    )?;
    let out = cfg.path(&cfg.paths.model);
    let log_path = cfg.path(&cfg.paths.train_log);
    save_checkpoint(&model, &out)?;
    write_bytes(&log_path, log.to_csv().as_bytes())?;
    run.output(&out);
    run.output(&log_path);
    run.finish()?;
    Ok(format!(
        "wrote {} ({} {} steps on {} examples, {} dropped)",
        out.display(),
        log.records.len(),
        objective.name(),
        examples.len(),
        log.n_dropped
    ))
}

fn report_csv(r: &EvalReport) -> String {
    let mut out = String::from("group,metric,value,aggregation\n");
    for g in r.groups() {
        for m in &r.metrics {
            let v = r.group_value(&g, m).unwrap_or(f64::NAN);
            out.push_str(&format!("{g},{m},{v:.6},{}\n", r.aggregation[m].label()));
        }
    }
    out
}

pub struct EvaluateArgs {
    pub system: Option<String>,
    pub model: Option<PathBuf>,
    pub hypotheses: Option<PathBuf>,
    pub base: bool,
}

pub fn evaluate(cfg: &RunConfig, args: EvaluateArgs) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "evaluate");
    let test_path = cfg.path(&cfg.paths.test_corpus);
    run.input(&test_path, &["gen-corpus"])?;
    let test = load_corpus(&test_path)?;
    let default_system = if args.hypotheses.is_some() {
        "hyps"
    } else if args.base {
        "base"
    } else {
        "model"
    };
    let system = args.system.unwrap_or_else(|| default_system.to_string());
    check_name("system", &system)?;
    run.param("system", &system);
    let reports = cfg.path(&cfg.paths.reports_dir);
    let (hyps, decoded) = match &args.hypotheses {
        Some(path) => {
            run.external_input(path)?;
            let mut map = BTreeMap::new();
            for h in read_jsonl::<HypothesisRecord>(path)? {
                if map.insert(h.segment_id.clone(), h.text).is_some() {
                    return Err(CliError::Config(format!(
                        "duplicate hypothesis for segment `{}`",
                        h.segment_id
                    )));
                }
            }
            (map, false)
        }
        None => {
            let model_path = match (&args.model, args.base) {
                (Some(p), _) => p.clone(),
                (None, true) => cfg.path(&cfg.paths.base_model),
                (None, false) => cfg.path(&cfg.paths.model),
            };
            run.input(&model_path, &["pretrain", "train"])?;
            let model = load_checkpoint(&model_path)?;
            (
                greedy_hypotheses(&model, &test, cfg.eval.max_len, cfg.workers)?,
                true,
            )
        }
    };
    let scorers = cfg
        .eval
        .metrics
        .iter()
        .map(|m| scorer(cfg, m))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate_system(&system, &hyps, &test, &scorers, &cfg.pivot, cfg.workers)?;
    let json_path = reports.join(format!("{system}.json"));
    let csv_path = reports.join(format!("{system}.csv"));
    write_json(&json_path, &report)?;
    write_bytes(&csv_path, report_csv(&report).as_bytes())?;
    run.output(&json_path);
    run.output(&csv_path);
    if decoded {
        let hyp_path = reports.join(format!("{system}.hyps.jsonl"));
        let records: Vec<HypothesisRecord> = hyps
            .iter()
            .map(|(k, v)| HypothesisRecord {
                segment_id: k.clone(),
                text: v.clone(),
            })
            .collect();
        write_jsonl(&hyp_path, &records)?;
        run.output(&hyp_path);
    }
    run.finish()?;
    let overall: Vec<String> = report
        .metrics
        .iter()
        .map(|m| format!("{m} {:.2}", report.overall[m]))
        .collect();
    Ok(format!(
        "wrote {} ({})",
        json_path.display(),
        overall.join(", ")
    ))
}

fn load_report(
    cfg: &RunConfig,
    run: &mut StageRun<'_>,
    system: &str,
) -> Result<EvalReport, CliError> {
    check_name("system", system)?;
    let path = cfg
        .path(&cfg.paths.reports_dir)
        .join(format!("{system}.json"));
    run.input(&path, &["evaluate"])?;
    read_json(&path)
}

pub fn compare(cfg: &RunConfig, a: &str, b: &str) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "compare");
    run.param("a", a);
    run.param("b", b);
    let ra = load_report(cfg, &mut run, a)?;
    let rb = load_report(cfg, &mut run, b)?;
    let table = compare_report(&ra, &rb, cfg.eval.alpha)?;
    let dir = cfg.path(&cfg.paths.reports_dir);
    let csv_path = dir.join(format!("compare-{a}-vs-{b}.csv"));
    let txt_path = dir.join(format!("compare-{a}-vs-{b}.txt"));
    write_bytes(&csv_path, table.to_csv().as_bytes())?;
    let text = table.to_text();
    write_bytes(&txt_path, text.as_bytes())?;
    run.output(&csv_path);
    run.output(&txt_path);
    run.finish()?;
    Ok(text.trim_end().to_string())
}

pub fn grid_experiment(cfg: &RunConfig) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "grid-experiment");
    let base_path = cfg.path(&cfg.paths.base_model);
    let corpus_path = cfg.path(&cfg.paths.corpus);
    let test_path = cfg.path(&cfg.paths.test_corpus);
    let dir = cfg.path(&cfg.paths.grid_dir);
    let index_path = dir.join("grid.json");
    run.input(&base_path, &["pretrain"])?;
    run.input(&corpus_path, &["gen-corpus"])?;
    run.input(&test_path, &["gen-corpus"])?;
    run.input(&index_path, &["build-prefs"])?;
    let index: GridIndex = read_json(&index_path)?;
    let mut cells = Vec::new();
    for c in &index.cells {
        let path = dir.join(&c.file);
        // the index manifest already covers every cell file
        verify_input(cfg, &path, &["build-prefs"])?;
        cells.push(GridCell {
            chosen_level: c.chosen_level,
            rejected_level: c.rejected_level,
            offsets: c.offsets,
            builder: c.builder.clone(),
            pairs: read_jsonl::<PreferencePair>(&path)?,
            n_discarded: c.n_discarded,
        });
    }
    let grid = QualityGrid {
        cells,
        chosen_offsets: index.chosen_offsets,
        rejected_offsets: index.rejected_offsets,
    };
    if grid.cells.len() != 9 {
        return Err(CliError::Config(format!(
            "grid has {} cells, expected 9",
            grid.cells.len()
        )));
    }
    let seed = cfg.stage_seed(cfg.train.seed, "train");
    run.seed("train", seed);
    let gc = GridExperimentConfig {
        train: cfg.train.to_train_config(ObjectiveKind::Cpo, seed),
        max_len: cfg.eval.max_len,
        pivot: cfg.pivot.clone(),
        workers: cfg.workers,
    };
    let base = load_checkpoint(&base_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let test = load_corpus(&test_path)?;
    let result = run_quality_grid_experiment(
        &base,
        &grid,
        &corpus,
        &test,
        scorer(cfg, &index.metric)?,
        &gc,
    )?;
    let reports = cfg.path(&cfg.paths.reports_dir);
    let matrix_path = reports.join("grid_matrix.csv");
    let stats_path = reports.join("grid_stats.csv");
    let json_path = reports.join("grid_experiment.json");
    write_bytes(&matrix_path, result.matrix_csv().as_bytes())?;
    write_bytes(&stats_path, result.stats_csv.as_bytes())?;
    write_json(&json_path, &result)?;
    run.output(&matrix_path);
    run.output(&stats_path);
    run.output(&json_path);
    run.finish()?;
    let best = result
        .best_cell()
        .map(|(c, r, v)| format!("best cell chosen={c} rejected={r} ({v:.2})"))
        .unwrap_or_else(|| "no cell had pairs".into());
    Ok(format!(
        "base {:.2}; {best}\n{}",
        result.base_score,
        result.matrix_csv().trim_end()
    ))
}

pub fn report(cfg: &RunConfig) -> Result<String, CliError> {
    let mut run = StageRun::new(cfg, "report");
    let dir = cfg.path(&cfg.paths.reports_dir);
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::Io {
            path: dir.display().to_string(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && !p.to_string_lossy().ends_with(".manifest.json")
        })
        .collect();
    names.sort();
    let mut reports = Vec::new();
    for p in &names {
        let Ok(m) = verify_input(cfg, p, &["evaluate"]) else {
            continue;
        };
        run.input(p, &[m.stage.as_str()])?;
        reports.push(read_json::<EvalReport>(p)?);
    }
    if reports.is_empty() {
        return Err(CliError::Config(format!(
            "no evaluation reports in {}",
            dir.display()
        )));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["group".to_string(), "metric".to_string()];
    header.extend(reports.iter().map(|r| r.system.clone()));
    rows.push(header);
    let first = &reports[0];
    for g in first.groups() {
        for m in &first.metrics {
            let mut row = vec![g.clone(), m.clone()];
            row.extend(reports.iter().map(|r| {
                r.group_value(&g, m)
                    .map(|v| format!("{v:.2}"))
                    .unwrap_or_else(|| "-".into())
            }));
            rows.push(row);
        }
    }
    let n_cols = rows[0].len();
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (v, w))| {
                if i < 2 {
                    format!("{v:<w$}")
                } else {
                    format!("{v:>w$}")
                }
            })
            .collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    let grid_matrix = dir.join("grid_matrix.csv");
    if grid_matrix.exists() {
        run.input(&grid_matrix, &["grid-experiment"])?;
        text.push_str("\nquality grid (rows chosen, columns rejected):\n");
        text.push_str(&String::from_utf8_lossy(&read_bytes(&grid_matrix)?));
    }
    let out = dir.join("summary.txt");
    write_bytes(&out, text.as_bytes())?;
    run.output(&out);
    run.finish()?;
    Ok(text.trim_end().to_string())
}
