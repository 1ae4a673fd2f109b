//! Binary checkpoint format:
//! `u64 LE header length | config JSON | u64 LE parameter count | f64 LE parameters`.

use std::path::Path;

use super::model::{ModelConfig, ToyModel};
use super::ModelError;

fn ck_err(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn save_checkpoint(model: &ToyModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let header = serde_json::to_vec(model.config()).expect("config serializes");
    let params = model.params();
    let mut buf = Vec::with_capacity(16 + header.len() + 8 * params.len());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, buf).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ToyModel, ModelError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<&[u8], ModelError> {
        let end = cursor
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| ck_err(path, "truncated file"))?;
        let s = &bytes[cursor..end];
        cursor = end;
        Ok(s)
    };
    let read_u64 = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
    let header_len = read_u64(take(8)?) as usize;
    let config: ModelConfig = serde_json::from_slice(take(header_len)?)
        .map_err(|e| ck_err(path, format!("bad header: {e}")))?;
    let n = read_u64(take(8)?) as usize;
    let raw = take(
        n.checked_mul(8)
            .ok_or_else(|| ck_err(path, "bad parameter count"))?,
    )?;
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if cursor != bytes.len() {
        return Err(ck_err(path, "trailing bytes after parameters"));
    }
    ToyModel::from_params(config, params)
}
