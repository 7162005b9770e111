//! On-disk checkpoints: `manifest.json` plus one flat little-endian `f64`
//! file (`tensors.bin`) holding parameters and, optionally, Adam moments.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

const FORMAT: &str = "chaoscast-checkpoint";
const VERSION: u32 = 1;
const DATA_FILE: &str = "tensors.bin";
const MANIFEST_FILE: &str = "manifest.json";

/// Position of the data stream, enough to regenerate every later batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub base_seed: u64,
    pub next_sequence_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub model_config: ModelConfig,
    pub step: u64,
    pub samples_seen: u64,
    pub rng: RngState,
    pub dtype: String,
    pub data_file: String,
    pub tensors: Vec<TensorEntry>,
    /// Trainer-owned state (configuration, metrics so far, optimizer step).
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Everything needed to continue a run, or just to run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Adam first and second moments, when saved by the trainer.
    pub moments: Option<(ModelParams, ModelParams)>,
    pub step: u64,
    pub samples_seen: u64,
    pub rng: RngState,
    pub extra: serde_json::Value,
}

impl Checkpoint {
    /// A bare checkpoint holding only weights.
    pub fn weights_only(params: ModelParams) -> Self {
        Self {
            params,
            moments: None,
            step: 0,
            samples_seen: 0,
            rng: RngState { base_seed: 0, next_sequence_index: 0 },
            extra: serde_json::Value::Null,
        }
    }
}

fn groups(ck: &Checkpoint) -> Vec<(&'static str, &ModelParams)> {
    let mut g = vec![("param", &ck.params)];
    if let Some((m, v)) = &ck.moments {
        g.push(("adam_m", m));
        g.push(("adam_v", v));
    }
    g
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write `ck` into directory `dir` (created if missing).
pub fn save_checkpoint(ck: &Checkpoint, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    let mut bytes = Vec::new();
    for (prefix, buf) in groups(ck) {
        if buf.config() != ck.params.config() {
            return Err(Error::CheckpointMismatch("moment buffers have a different layout".into()));
        }
        for t in &buf.layout().tensors {
            let len: usize = t.shape.iter().product();
            let offset = bytes.len() as u64;
            for v in &buf.data[t.offset..t.offset + len] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorEntry {
                name: format!("{prefix}/{}", t.name),
                shape: t.shape.clone(),
                byte_offset: offset,
                byte_len: (len * 8) as u64,
            });
        }
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        model_config: *ck.params.config(),
        step: ck.step,
        samples_seen: ck.samples_seen,
        rng: ck.rng,
        dtype: "f64le".into(),
        data_file: DATA_FILE.into(),
        tensors,
        extra: ck.extra.clone(),
    };
    write_atomic(&dir.join(DATA_FILE), &bytes)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(dir.to_path_buf())
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|source| Error::UnreadableFile { path: path.clone(), source })?;
    let manifest: CheckpointManifest = serde_json::from_slice(&text)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "unsupported checkpoint format {} v{}",
            manifest.format, manifest.version
        )));
    }
    if manifest.dtype != "f64le" {
        return Err(Error::CheckpointMismatch(format!("unsupported dtype {}", manifest.dtype)));
    }
    Ok(manifest)
}

/// Load a checkpoint. When `expected` is given, the stored model
/// configuration must equal it.
pub fn load_checkpoint(dir: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let manifest = read_manifest(dir)?;
    let cfg = manifest.model_config;
    if let Some(want) = expected {
        if *want != cfg {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint was written for {cfg:?}, requested {want:?}"
            )));
        }
    }
    let data_path = dir.join(&manifest.data_file);
    let bytes = fs::read(&data_path).map_err(|source| Error::UnreadableFile { path: data_path.clone(), source })?;

    let mut params = ModelParams::zeros(&cfg)?;
    let has_moments = manifest.tensors.iter().any(|t| t.name.starts_with("adam_m/"));
    let mut moments = has_moments.then(|| (params.zeros_like(), params.zeros_like()));
    let expected_tensors = params.layout().tensors.len() * if has_moments { 3 } else { 1 };
    if manifest.tensors.len() != expected_tensors {
        return Err(Error::CheckpointMismatch(format!(
            "expected {expected_tensors} tensors, manifest lists {}",
            manifest.tensors.len()
        )));
    }

    let layout = params.layout().clone();
    let mut entries = manifest.tensors.iter();
    let mut fill = |prefix: &str, dst: &mut ModelParams| -> Result<()> {
        for t in &layout.tensors {
            let e = entries.next().expect("count checked");
            let name = format!("{prefix}/{}", t.name);
            let len: usize = t.shape.iter().product();
            if e.name != name || e.shape != t.shape || e.byte_len != (len * 8) as u64 {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    e.name, e.shape, name, t.shape
                )));
            }
            let start = e.byte_offset as usize;
            let end = start + e.byte_len as usize;
            let raw = bytes
                .get(start..end)
                .ok_or_else(|| Error::CheckpointMismatch(format!("{} lies outside the data file", e.name)))?;
            for (v, chunk) in dst.data[t.offset..t.offset + len].iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        Ok(())
    };
    fill("param", &mut params)?;
    if let Some((m, v)) = moments.as_mut() {
        fill("adam_m", m)?;
        fill("adam_v", v)?;
    }
    Ok(Checkpoint {
        params,
        moments,
        step: manifest.step,
        samples_seen: manifest.samples_seen,
        rng: manifest.rng,
        extra: manifest.extra,
    })
}
