//! The per-run manifest: what ran, with which resolved configuration, on
//! which inputs, producing which outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        let data = std::fs::read(path)
            .map_err(|source| chaoscast::Error::UnreadableFile { path: path.to_path_buf(), source })?;
        let sha256 = Sha256::digest(&data).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { path: path.to_path_buf(), sha256, bytes: data.len() as u64 })
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub workers: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

/// Files a command read and wrote, plus its resolved configuration.
#[derive(Debug, Default)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn path(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("manifest_{command}.json"))
    }

    /// Write next to the outputs via a temporary file and rename.
    pub fn write(&self, out_dir: &Path) -> anyhow::Result<PathBuf> {
        let path = Self::path(out_dir, &self.command);
        let tmp = path.with_extension("json.tmp");
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
