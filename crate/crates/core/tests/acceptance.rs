//! Acceptance suite: runs criteria 1–8 and prints one PASS/FAIL line each.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::*;
use prefalign::corpus::*;
use prefalign::eval::*;
use prefalign::metrics::*;
use prefalign::prefbuild::*;
use prefalign::toymt::*;
use prefalign::train::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let pairs = random_metric_pairs(2024, 200);
    let (mut chrf_err, mut bleu_err, mut edit_mismatch) = (0f64, 0f64, 0usize);
    for (h, r) in &pairs {
        chrf_err = chrf_err.max((chrf(h, r) - chrf_oracle(h, r)).abs());
        bleu_err = bleu_err.max((sentence_bleu(h, r) - sentence_bleu_oracle(h, r)).abs());
        edit_mismatch += usize::from(edit_sim(h, r) != edit_sim_oracle(h, r));
    }
    let refs: Vec<(&str, &str)> = pairs
        .iter()
        .map(|(h, r)| (h.as_str(), r.as_str()))
        .collect();
    chrf_err = chrf_err.max((chrf_corpus(&refs) - chrf_corpus_oracle(&pairs)).abs());
    bleu_err = bleu_err.max((corpus_bleu(&refs) - corpus_bleu_oracle(&pairs)).abs());
    let secs = t.elapsed().as_secs_f64();
    ensure(
        chrf_err <= 1e-9 && bleu_err <= 1e-9 && edit_mismatch == 0 && secs < 10.0,
        format!("max |Δchrf| {chrf_err:.1e}, max |Δbleu| {bleu_err:.1e}, edit_sim mismatches {edit_mismatch}, {secs:.2}s"),
    )
}

fn random_batch(
    r: &mut ChaCha8Rng,
    alphabet: &[char],
    n: usize,
    max_len: usize,
) -> Vec<TrainExample> {
    (0..n)
        .map(|_| {
            let chosen = random_text(r, alphabet, max_len);
            let mut rejected = random_text(r, alphabet, max_len);
            if rejected == chosen {
                rejected.push(alphabet[0]);
            }
            TrainExample::pair(random_text(r, alphabet, max_len), chosen, rejected)
        })
        .collect()
}

fn gradient_check() -> Outcome {
    let t = Instant::now();
    let mut worst = 0f64;
    let mut max_params = 0;
    let mut r = rng(77);
    for seed in 0..10u64 {
        let (chars, dim, layers) = [("ab", 4, 1), ("abc", 4, 1), ("a b", 4, 1)][seed as usize % 3];
        let model = random_tiny_model(100 + seed, chars, dim, layers, 2, 10);
        max_params = max_params.max(model.n_params());
        let alphabet: Vec<char> = chars.chars().collect();
        let batch = random_batch(&mut r, &alphabet, 3, 3);
        let beta = r.random_range(0.1..2.0);
        let objectives: [&dyn Objective; 2] = [
            &SftObjective { batch: &batch },
            &CpoObjective {
                batch: &batch,
                beta,
            },
        ];
        for obj in objectives {
            let (_, analytic) = loss_gradient(&model, obj).map_err(|e| e.to_string())?;
            let config = model.config().clone();
            let numeric = fd_gradient(model.params(), 1e-4, |p| {
                let m = ToyModel::from_params(config.clone(), p.to_vec()).unwrap();
                obj.evaluate(&m, None).unwrap().total
            });
            worst = worst.max(max_rel_err(&analytic, &numeric, 1e-3));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-4 && max_params <= 500 && secs < 60.0,
        format!(
            "max relative error {worst:.2e} over 10 models (≤ {max_params} params), {secs:.1}s"
        ),
    )
}

fn decomposition() -> Outcome {
    let mut r = rng(31);
    let alphabet: Vec<char> = "abc ".chars().collect();
    let (mut worst, mut ln2_err) = (0f64, 0f64);
    for seed in 0..20u64 {
        let model = random_tiny_model(seed, "abc ", 8, 1, 2, 16);
        let batch = random_batch(&mut r, &alphabet, 1 + seed as usize % 5, 5);
        let beta = r.random_range(0.0..3.0);
        let (cpo, _) = cpo_loss(&model, &batch, beta).map_err(|e| e.to_string())?;
        let (sft, _) = sft_loss(&model, &batch).map_err(|e| e.to_string())?;
        worst = worst.max((cpo.total - (cpo.pref_term + sft.total)).abs());
        let (zero, _) = cpo_loss(&model, &batch, 0.0).map_err(|e| e.to_string())?;
        ln2_err = ln2_err.max((zero.pref_term - std::f64::consts::LN_2).abs());
    }
    ensure(
        worst <= 1e-12 && ln2_err <= 1e-12,
        format!("max |cpo − (pref + sft)| {worst:.1e}, max |pref(β=0) − ln 2| {ln2_err:.1e}"),
    )
}

const SYSTEM_POOL: [&str; 6] = ["ref", "base", "ext:a", "ext:b", "sample:1", "sample:2"];

fn builder_invariants() -> Outcome {
    let mut r = rng(4242);
    let (mut multi_sets, mut mono_pool) = (Vec::new(), Vec::new());
    let mut violations = Vec::new();
    for i in 0..10_000 {
        // multi-system: 2..6 systems with coarse scores so ties are common
        let n = r.random_range(2..=6);
        let systems: Vec<SystemId> = SYSTEM_POOL[..n]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..6u8))).collect();
        let cands = systems
            .iter()
            .map(|s| Candidate::new(s.clone(), format!("{s}")))
            .collect();
        let cs = CandidateSet::new(format!("m{i}"), cands).unwrap();
        let sc: Scores = systems
            .iter()
            .cloned()
            .zip(scores.iter().copied())
            .collect();
        let max = scores.iter().copied().fold(f64::MIN, f64::max);
        let min = scores.iter().copied().fold(f64::MAX, f64::min);
        let arg = |v: f64| {
            systems
                .iter()
                .filter(|s| sc[*s] == v)
                .min_by_key(|s| system_priority(s))
                .unwrap()
                .clone()
        };
        match build_multi_system(&cs, &sc, "m", "multi").map_err(|e| e.to_string())? {
            Some(p) => {
                if p.chosen_score <= p.rejected_score {
                    violations.push(format!("multi {i}: not strictly ordered"));
                }
                if p.chosen.system != arg(max) || p.rejected.system != arg(min) {
                    violations.push(format!("multi {i}: differs from brute-force argmax/argmin"));
                }
            }
            None if max != min => {
                violations.push(format!("multi {i}: no pair although scores differ"))
            }
            None => {}
        }
        if let Some(p) = build_fixed_chosen(&cs, &sc, &SystemId::Reference, "m", "fixed")
            .map_err(|e| e.to_string())?
        {
            if p.chosen_score <= p.rejected_score {
                violations.push(format!("fixed {i}: not strictly ordered"));
            }
        }
        multi_sets.push((cs, sc));

        // mono-system
        let k = r.random_range(1..=20);
        let samples: Vec<f64> = (0..k).map(|_| f64::from(r.random_range(0..25u8))).collect();
        let base = f64::from(r.random_range(0..25u8));
        let (o_r, o_c) = (r.random_range(1..=22), r.random_range(1..=22));
        let sampled: Vec<(Candidate, f64)> = samples
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                (
                    Candidate::new(SystemId::Sampled(j as u32 + 1), format!("s{j}")),
                    s,
                )
            })
            .collect();
        let rc = rank_candidates(
            format!("s{i}"),
            &sampled,
            (Candidate::new(SystemId::BaseGreedy, "b"), base),
        )
        .map_err(|e| e.to_string())?;
        let got = build_mono_offset(&rc, OffsetConfig { o_r, o_c }, "m", "mono")
            .map_err(|e| e.to_string())?;
        if let Some(p) = &got {
            if !(p.rejected_score < base && base < p.chosen_score) {
                violations.push(format!(
                    "mono {i}: base not strictly between rejected and chosen"
                ));
            }
        }
        if got.map(|p| (p.chosen_score, p.rejected_score)) != mono_oracle(&samples, base, o_r, o_c)
        {
            violations.push(format!("mono {i}: differs from offset definition"));
        }
        mono_pool.push(rc);
    }
    let excluded: BTreeSet<SystemId> = [SystemId::Reference].into();
    let multi =
        build_multi_dataset(&multi_sets, &excluded, "m", "multi").map_err(|e| e.to_string())?;
    let fixed = build_fixed_chosen_dataset(&multi_sets[..], &SystemId::Reference, "m", "fixed")
        .map_err(|e| e.to_string())?;
    let mono = build_mono_dataset(&mono_pool, OffsetConfig { o_r: 3, o_c: 2 }, "m", "mono")
        .map_err(|e| e.to_string())?;
    for (name, out) in [("multi-ablate", &multi), ("fixed", &fixed), ("mono", &mono)] {
        if out.pairs.len() + out.n_discarded != 10_000 {
            violations.push(format!(
                "{name}: emitted + discarded = {}",
                out.pairs.len() + out.n_discarded
            ));
        }
        if out.pairs.iter().any(|p| p.chosen_score <= p.rejected_score) {
            violations.push(format!("{name}: pair not strictly ordered"));
        }
    }
    ensure(
        violations.is_empty(),
        format!(
            "10000 pools; emitted multi {} / fixed {} / mono {}; {} violations{}",
            multi.pairs.len(),
            fixed.pairs.len(),
            mono.pairs.len(),
            violations.len(),
            violations
                .first()
                .map(|v| format!(" (first: {v})"))
                .unwrap_or_default()
        ),
    )
}

fn calibration() -> Outcome {
    let k = 20;
    let pool: Vec<RankedCandidates> = (0..30)
        .map(|i| {
            let sampled: Vec<(Candidate, f64)> = (0..k)
                .map(|j| {
                    (
                        Candidate::new(SystemId::Sampled(j + 1), format!("{j}")),
                        5.0 * (j + 1) as f64,
                    )
                })
                .collect();
            let base = 40.0 + 2.5 * (i % 7) as f64 + 1.0;
            rank_candidates(
                format!("c{i}"),
                &sampled,
                (Candidate::new(SystemId::BaseGreedy, "b"), base),
            )
            .unwrap()
        })
        .collect();
    let raw: Vec<(Vec<f64>, f64)> = pool
        .iter()
        .map(|rc| (rc.sorted.iter().map(|(_, s)| *s).collect(), rc.base.1))
        .collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for (tc, tr) in [
        (70.0, 30.0),
        (60.0, 35.0),
        (90.0, 10.0),
        (55.0, 40.0),
        (120.0, -10.0),
    ] {
        let cal = calibrate_offsets(&pool, tc, tr).map_err(|e| e.to_string())?;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for o_r in 1..=k as usize {
            for o_c in 1..=k as usize {
                let hits: Vec<(f64, f64)> = raw
                    .iter()
                    .filter_map(|(s, b)| mono_oracle(s, *b, o_r, o_c))
                    .collect();
                if hits.is_empty() {
                    continue;
                }
                let n = hits.len() as f64;
                let ac = hits.iter().map(|h| h.0).sum::<f64>() / n;
                let ar = hits.iter().map(|h| h.1).sum::<f64>() / n;
                let d = (ac - tc).abs() + (ar - tr).abs();
                if d < best.0 {
                    best = (d, ac, ar);
                }
            }
        }
        let same = (cal.deviation - best.0).abs() < 1e-9;
        let feasible = (5.0..=100.0).contains(&tc) && (5.0..=100.0).contains(&tr);
        let close = !feasible
            || ((cal.achieved_chosen - tc).abs() <= 1.0
                && (cal.achieved_rejected - tr).abs() <= 1.0);
        ok &= same && close;
        notes.push(format!(
            "({tc},{tr})→({:.2},{:.2})",
            cal.achieved_chosen, cal.achieved_rejected
        ));
    }
    ensure(
        ok,
        format!(
            "optimum matches exhaustive search; targets→achieved {}",
            notes.join(" ")
        ),
    )
}

fn significance() -> Outcome {
    let r =
        paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 0.05).map_err(|e| e.to_string())?;
    let mut worst = 0f64;
    for df in 2..=50 {
        for i in 0..=9 {
            let t = 0.5 + 0.5 * f64::from(i);
            worst = worst.max(
                (student_t_upper_tail(t, df as f64) - t_upper_tail_quadrature(t, df as f64)).abs(),
            );
        }
    }
    ensure(
        (r.t - 4.2426).abs() < 1e-4 && (r.p_one_tailed - 0.0066).abs() <= 1e-3 && worst <= 1e-6,
        format!(
            "t {:.4}, p {:.4}, max |p − quadrature| {worst:.1e}",
            r.t, r.p_one_tailed
        ),
    )
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn cipher_corpus(n: usize, seed: u64, prefix: &str) -> Corpus {
    generate_with(&SyntheticCorpusSpec {
        task: SynthTask::Cipher,
        n,
        noise_rate: 0.1,
        seed,
        id_prefix: prefix.into(),
        shape: TextShape::default(),
    })
    .unwrap()
}

fn edit_sim_on(model: &ToyModel, test: &Corpus) -> Result<f64, String> {
    let hyps = greedy_hypotheses(model, test, 40, 1).map_err(|e| e.to_string())?;
    let scorer = scorer_by_name("edit_sim", None).map_err(|e| e.to_string())?;
    let report =
        evaluate_system("m", &hyps, test, &[scorer], "en", 1).map_err(|e| e.to_string())?;
    Ok(report.overall["edit_sim"])
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let train_c = generate_synthetic_corpus(SynthTask::Cipher, 2000, 0.1, 1).unwrap();
    let test_c = cipher_corpus(200, 2, "test");
    let pre_c = cipher_corpus(200, 3, "pre");
    let config = ModelConfig {
        chars: SYNTH_ALPHABET.into(),
        dim: 24,
        n_layers: 1,
        n_heads: 2,
        max_len: 32,
        seed: 7,
    };
    let mut base = ToyModel::init(config).unwrap();
    let vocab = base.vocab().size();
    let pre = TrainConfig {
        objective: ObjectiveKind::Sft,
        base_lr: 3e-3,
        batch_size: 16,
        epochs: 100,
        seed: 0,
        warmup_steps: Some(1000),
        ..Default::default()
    };
    train(&mut base, &examples_from_references(&pre_c), &pre).map_err(|e| e.to_string())?;
    let b0 = edit_sim_on(&base, &test_c)?;
    let scorer = scorer_by_name("edit_sim", None).unwrap();
    let greedy: Vec<String> = train_c
        .segments()
        .iter()
        .map(|s| greedy_decode(&base, &s.source, 40).unwrap())
        .collect();

    let (mut cpo_gain, mut sft_gain, mut self_gain) = (Vec::new(), Vec::new(), Vec::new());
    let mut matrices = Vec::new();
    let mut grid_stats_ok = true;
    for seed in 0..5u64 {
        let mut pool = Vec::with_capacity(train_c.len());
        for (i, seg) in train_c.segments().iter().enumerate() {
            let reference = seg.reference.as_deref().unwrap();
            let samples = generate_candidates(
                &base,
                &seg.source,
                20,
                SamplingParams::default(),
                40,
                seed * 1_000_000 + i as u64 * 100,
            )
            .map_err(|e| e.to_string())?;
            let sampled: Vec<(Candidate, f64)> = samples
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    (
                        Candidate::new(SystemId::Sampled(k as u32 + 1), s.clone()),
                        edit_sim(s, reference),
                    )
                })
                .collect();
            let g = &greedy[i];
            let gs = edit_sim(g, reference);
            pool.push(
                rank_candidates(
                    &seg.id,
                    &sampled,
                    (Candidate::new(SystemId::BaseGreedy, g.clone()), gs),
                )
                .map_err(|e| e.to_string())?,
            );
        }
        let out = build_mono_dataset(&pool, OffsetConfig { o_r: 20, o_c: 20 }, "edit_sim", "mono")
            .map_err(|e| e.to_string())?;
        let dataset = PreferenceDataset::new(out.pairs, DatasetMetadata::default())
            .map_err(|e| e.to_string())?;
        let pairs = examples_from_preferences(&dataset, &train_c).map_err(|e| e.to_string())?;
        let tc = |objective| TrainConfig {
            objective,
            base_lr: 3e-3,
            beta: 1.0,
            batch_size: 16,
            epochs: 3,
            seed,
            warmup_steps: None,
            ..Default::default()
        };

        let mut cpo = base.clone();
        train(&mut cpo, &pairs, &tc(ObjectiveKind::Cpo)).map_err(|e| e.to_string())?;
        let mut sft = base.clone();
        let chosen: Vec<TrainExample> = pairs
            .iter()
            .map(|e| TrainExample::sft(&e.source, &e.chosen))
            .collect();
        train(&mut sft, &chosen, &tc(ObjectiveKind::Sft)).map_err(|e| e.to_string())?;
        let mut own = base.clone();
        let ids: HashSet<&str> = dataset
            .pairs
            .iter()
            .map(|p| p.segment_id.as_str())
            .collect();
        let self_data: Vec<TrainExample> = train_c
            .segments()
            .iter()
            .zip(&greedy)
            .filter(|(s, _)| ids.contains(s.id.as_str()))
            .map(|(s, g)| TrainExample::sft(&s.source, g))
            .collect();
        train(&mut own, &self_data, &tc(ObjectiveKind::Sft)).map_err(|e| e.to_string())?;
        cpo_gain.push(edit_sim_on(&cpo, &test_c)? - b0);
        sft_gain.push(edit_sim_on(&sft, &test_c)? - b0);
        self_gain.push(edit_sim_on(&own, &test_c)? - b0);

        let grid = build_quality_grid(&pool, &GridResolution::Auto, "edit_sim")
            .map_err(|e| e.to_string())?;
        let gc = GridExperimentConfig {
            train: tc(ObjectiveKind::Cpo),
            max_len: 40,
            pivot: "en".into(),
            workers: 1,
        };
        let exp = run_quality_grid_experiment(&base, &grid, &train_c, &test_c, scorer.clone(), &gc)
            .map_err(|e| e.to_string())?;
        grid_stats_ok &=
            exp.stats_csv.lines().count() == 10 && grid.cells.iter().all(|c| !c.pairs.is_empty());
        matrices.push(exp.matrix);
        println!(
            "    seed {seed}: {} pairs, gains cpo {:+.2} sft {:+.2} self {:+.2}, grid best {:?}",
            dataset.len(),
            cpo_gain[seed as usize],
            sft_gain[seed as usize],
            self_gain[seed as usize],
            exp.best_cell().map(|(c, r, v)| format!("{c}/{r} {v:.2}"))
        );
    }
    let (a, b, c) = (median(&cpo_gain), median(&sft_gain), median(&self_gain));
    let mut med = [[None; 3]; 3];
    let mut full = true;
    for i in 0..3 {
        for j in 0..3 {
            let vals: Vec<f64> = matrices.iter().filter_map(|m| m[i][j]).collect();
            full &= vals.len() == matrices.len();
            med[i][j] = (!vals.is_empty()).then(|| median(&vals));
        }
    }
    let median_exp = GridExperiment {
        metric: "edit_sim".into(),
        base_score: b0,
        matrix: med,
        stats_csv: String::new(),
    };
    let best = median_exp.best_cell();
    println!("    median grid (rows chosen Low/Mid/High, columns rejected Low/Mid/High):");
    for line in median_exp.matrix_csv().lines() {
        println!("      {line}");
    }
    let secs = t.elapsed().as_secs_f64();
    let checks = [
        ("a", a >= 2.0),
        ("b", a >= b),
        ("c", c.abs() < 1.0),
        (
            "d",
            full && grid_stats_ok && best.is_some_and(|(cl, _, _)| cl == Level::High),
        ),
        ("runtime", secs <= 900.0),
    ];
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    ensure(
        failed.is_empty(),
        format!(
            "vocab {vocab}, {} params, base edit_sim {b0:.2}; median gains cpo {a:+.2} sft {b:+.2} self {c:+.2}; best grid cell {}; {secs:.0}s{}",
            base.n_params(),
            best.map(|(c, r, v)| format!("chosen {c} / rejected {r} ({v:.2})")).unwrap_or_else(|| "none".into()),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

const PIPELINE: &[&[&str]] = &[
    &["gen-corpus"],
    &["pretrain"],
    &["gen-candidates"],
    &["score"],
    &["build-prefs", "mono-offset"],
    &["train", "cpo"],
    &["evaluate", "--base"],
    &["evaluate"],
    &["compare", "base", "model"],
    &["build-prefs", "grid"],
    &["grid-experiment"],
    &[
        "calibrate",
        "--target-chosen",
        "80",
        "--target-rejected",
        "40",
    ],
    &["report"],
];

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    for args in PIPELINE {
        let out = Command::new(env!("CARGO_BIN_EXE_prefalign"))
            .current_dir(dir)
            .env_remove("PREFALIGN_SCORER_URL")
            .args(["--workers", "1", "--seed", "11"])
            .args(*args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "{args:?}: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
    }
    Ok(())
}

fn reproducibility() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let t = Instant::now();
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let (fa, fb) = (
        files_under(&a.path().join("run")),
        files_under(&b.path().join("run")),
    );
    let reports = fa.keys().filter(|p| p.starts_with("reports")).count();
    let differing: Vec<String> = fa
        .iter()
        .filter(|(p, bytes)| fb.get(*p) != Some(*bytes))
        .map(|(p, _)| p.display().to_string())
        .chain(
            fb.keys()
                .filter(|p| !fa.contains_key(*p))
                .map(|p| p.display().to_string()),
        )
        .collect();
    ensure(
        reports > 0 && differing.is_empty(),
        format!(
            "{} files ({reports} reports) compared across two runs, {} differ{}, {:.0}s",
            fa.len(),
            differing.len(),
            differing
                .first()
                .map(|p| format!(" (first: {p})"))
                .unwrap_or_default(),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric oracle equivalence", metric_oracles),
        ("gradient correctness", gradient_check),
        ("CPO decomposition identity", decomposition),
        ("builder invariants", builder_invariants),
        ("offset calibration", calibration),
        ("significance testing", significance),
        ("end-to-end directional replication", end_to_end),
        ("reproducibility", reproducibility),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {status} {name}: {detail}", i + 1);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
