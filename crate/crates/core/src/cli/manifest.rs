use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::CliError;
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one stage run; a copy sits next to every artifact it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub stage: String,
    pub params: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    /// Config hashes of the consumed artifacts, in input order.
    pub upstream: Vec<String>,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn file_sha(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&read_bytes(path)?))
}

/// Config sections a stage depends on directly.
fn sections(cfg: &RunConfig, stage: &str) -> Result<Value, CliError> {
    Ok(match stage {
        "gen-corpus" => json!({ "corpus": v(&cfg.corpus) }),
        "pretrain" => json!({ "model": v(&cfg.model), "pretrain": v(&cfg.pretrain) }),
        "gen-candidates" => json!({ "candidates": v(&cfg.candidates) }),
        "score" => json!({ "metric": cfg.scoring.metric }),
        "build-prefs" | "calibrate" => json!({ "prefs": v(&cfg.prefs) }),
        "train" => json!({ "train": v(&cfg.train) }),
        "evaluate" => json!({ "eval": v(&cfg.eval), "pivot": cfg.pivot }),
        "compare" => json!({ "alpha": cfg.eval.alpha }),
        "grid-experiment" => json!({
            "train": v(&cfg.train), "eval": v(&cfg.eval), "metric": cfg.scoring.metric, "pivot": cfg.pivot
        }),
        "report" => json!({}),
        other => {
            return Err(CliError::Manifest(format!(
                "unknown stage `{other}` in manifest"
            )))
        }
    })
}

fn v<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("config sections serialize")
}

pub fn config_hash(
    cfg: &RunConfig,
    stage: &str,
    params: &BTreeMap<String, String>,
    seeds: &BTreeMap<String, u64>,
    upstream: &[String],
) -> Result<String, CliError> {
    let doc = json!({
        "stage": stage,
        "sections": sections(cfg, stage)?,
        "params": params,
        "seeds": seeds,
        "upstream": upstream,
    });
    Ok(sha256_hex(
        serde_json::to_string(&doc)
            .expect("json values serialize")
            .as_bytes(),
    ))
}

/// Path as recorded in manifests: relative to the run root when possible, `/`-separated.
pub fn display_path(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Checks an artifact against its manifest and the current configuration.
///
/// Returns the manifest; errors if the manifest is missing, the file changed
/// since it was written, or the producing stage's config hash no longer matches.
pub fn verify_input(
    cfg: &RunConfig,
    path: &Path,
    expected_stages: &[&str],
) -> Result<Manifest, CliError> {
    let mpath = manifest_path(path);
    let bytes = read_bytes(&mpath).map_err(|_| {
        CliError::Manifest(format!(
            "{} has no manifest ({}); run the producing stage first",
            path.display(),
            mpath.display()
        ))
    })?;
    let m: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Manifest(format!("{}: {e}", mpath.display())))?;
    if !expected_stages.contains(&m.stage.as_str()) {
        return Err(CliError::Manifest(format!(
            "{} was produced by `{}`, expected one of {expected_stages:?}",
            path.display(),
            m.stage
        )));
    }
    let name = display_path(&cfg.paths.root, path);
    let recorded = m.outputs.iter().find(|o| o.path == name).ok_or_else(|| {
        CliError::Manifest(format!(
            "{} does not list {name} among its outputs",
            mpath.display()
        ))
    })?;
    let actual = file_sha(path)?;
    if actual != recorded.sha256 {
        return Err(CliError::Manifest(format!(
            "{} changed since it was written (sha256 {actual}, manifest {})",
            path.display(),
            recorded.sha256
        )));
    }
    let expected = config_hash(cfg, &m.stage, &m.params, &m.seeds, &m.upstream)?;
    if expected != m.config_hash {
        return Err(CliError::Manifest(format!(
            "{} is stale: produced under config hash {}, the current config gives {expected}; rerun `{}`",
            path.display(),
            m.config_hash,
            m.stage
        )));
    }
    Ok(m)
}

/// Collects inputs and outputs of one stage run and writes its manifests.
pub struct StageRun<'a> {
    cfg: &'a RunConfig,
    stage: String,
    params: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
    upstream: Vec<String>,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
}

impl<'a> StageRun<'a> {
    pub fn new(cfg: &'a RunConfig, stage: &str) -> Self {
        Self {
            cfg,
            stage: stage.into(),
            params: BTreeMap::new(),
            seeds: BTreeMap::new(),
            upstream: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, k: &str, v: impl Into<String>) {
        self.params.insert(k.into(), v.into());
    }

    pub fn seed(&mut self, k: &str, v: u64) {
        self.seeds.insert(k.into(), v);
    }

    /// Verifies and records a pipeline artifact.
    pub fn input(&mut self, path: &Path, stages: &[&str]) -> Result<Manifest, CliError> {
        let m = verify_input(self.cfg, path, stages)?;
        self.upstream.push(m.config_hash.clone());
        self.inputs.push(FileDigest {
            path: display_path(&self.cfg.paths.root, path),
            sha256: file_sha(path)?,
        });
        Ok(m)
    }

    /// Records a user-supplied file that has no manifest; its content hash stands in for a config hash.
    pub fn external_input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha = file_sha(path)?;
        self.upstream.push(format!("file:{sha}"));
        self.inputs.push(FileDigest {
            path: display_path(&self.cfg.paths.root, path),
            sha256: sha,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Hashes the outputs and writes one manifest beside each.
    pub fn finish(self) -> Result<Manifest, CliError> {
        let root = &self.cfg.paths.root;
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: display_path(root, p),
                    sha256: file_sha(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let config_hash = config_hash(
            self.cfg,
            &self.stage,
            &self.params,
            &self.seeds,
            &self.upstream,
        )?;
        let m = Manifest {
            stage: self.stage,
            params: self.params,
            seeds: self.seeds,
            upstream: self.upstream,
            config_hash,
            inputs: self.inputs,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        for p in &self.outputs {
            write_bytes(&manifest_path(p), text.as_bytes())?;
        }
        Ok(m)
    }
}
