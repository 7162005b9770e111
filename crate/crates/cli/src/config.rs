//! The optional `--config` JSON file and flag-level usage errors.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chaoscast::backtest::GridConfig;
use chaoscast::chaos::GenConfig;
use chaoscast::model::ModelConfig;
use chaoscast::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// A flag combination that cannot run.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub preset: Option<String>,
    pub generate: Option<GenConfig>,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
    pub grid: Option<GridConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<(Self, Option<PathBuf>)> {
        let Some(path) = path else { return Ok((Self::default(), None)) };
        let text = std::fs::read(path)
            .map_err(|source| chaoscast::Error::UnreadableFile { path: path.to_path_buf(), source })?;
        let cfg = serde_json::from_slice(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))
            .context("reading --config")?;
        Ok((cfg, Some(path.to_path_buf())))
    }
}

/// Split `KEY=VALUE` where the key is a horizon.
pub fn horizon_pair(s: &str) -> Result<(u32, PathBuf), UsageError> {
    let (h, p) = s.split_once('=').ok_or_else(|| UsageError(format!("expected HORIZON=PATH, got `{s}`")))?;
    let h = h.trim().parse().map_err(|_| UsageError(format!("`{h}` is not a horizon")))?;
    Ok((h, PathBuf::from(p)))
}
