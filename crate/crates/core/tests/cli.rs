use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "corpus.n_train=40",
    "corpus.n_test=12",
    "corpus.n_pretrain=30",
    "pretrain.epochs=4",
    "candidates.k=6",
    "prefs.o_r=2",
    "prefs.o_c=2",
    "train.epochs=1",
];

fn prefalign(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prefalign"));
    cmd.current_dir(dir).env_remove("PREFALIGN_SCORER_URL");
    for s in SMALL {
        cmd.args(["--set", s]);
    }
    cmd.args(["--workers", "1"]).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = prefalign(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn pipeline(dir: &Path) {
    ok(dir, &["gen-corpus"]);
    ok(dir, &["pretrain"]);
    ok(dir, &["gen-candidates"]);
    ok(dir, &["score"]);
    ok(dir, &["build-prefs", "mono-offset"]);
    ok(dir, &["train", "cpo"]);
    ok(dir, &["evaluate", "--base"]);
    ok(dir, &["evaluate"]);
    ok(dir, &["compare", "base", "model"]);
    ok(dir, &["report"]);
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
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

#[test]
fn small_pipeline_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (ta, tb) = (tree(&a.path().join("run")), tree(&b.path().join("run")));
    assert!(ta.keys().any(|p| p.ends_with("reports/summary.txt")));
    assert!(ta.keys().any(|p| p.ends_with("model.ckpt.manifest.json")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (p, bytes) in &ta {
        assert!(bytes == &tb[p], "{} differs", p.display());
    }
}

#[test]
fn reference_hypotheses_get_full_chrf() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-corpus"]);
    let test = std::fs::read_to_string(dir.path().join("run/test.jsonl")).unwrap();
    let hyps: String = test
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            format!(
                "{}\n",
                serde_json::json!({ "segment_id": v["id"], "text": v["reference"] })
            )
        })
        .collect();
    let hyp_path = dir.path().join("hyps.jsonl");
    std::fs::write(&hyp_path, hyps).unwrap();
    ok(
        dir.path(),
        &[
            "evaluate",
            "--system",
            "oracle",
            "--hypotheses",
            hyp_path.to_str().unwrap(),
        ],
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run/reports/oracle.json")).unwrap())
            .unwrap();
    for m in ["chrf", "bleu", "edit_sim"] {
        assert!(
            (report["overall"][m].as_f64().unwrap() - 100.0).abs() < 1e-9,
            "{m}"
        );
    }
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefalign(dir.path(), &["gen-corpus", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = prefalign(dir.path(), &["build-prefs", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefalign(dir.path(), &["--set", "corpus.bogus=1", "gen-corpus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = prefalign(dir.path(), &["pretrain"]);
    assert_eq!(out.status.code(), Some(1), "missing upstream artifact");
}

#[test]
fn stale_or_tampered_inputs_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-corpus"]);
    // a changed corpus section makes the recorded corpus stale
    let out = prefalign(dir.path(), &["--set", "corpus.noise_rate=0.2", "pretrain"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gen-corpus"), "{err}");

    let path = dir.path().join("run/pretrain.jsonl");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(b"\n");
    std::fs::write(&path, bytes).unwrap();
    let out = prefalign(dir.path(), &["pretrain"]);
    assert_eq!(out.status.code(), Some(1));
}
