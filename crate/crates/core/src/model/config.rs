use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How positions are encoded before the first decoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalEncoding {
    /// Fixed sine/cosine table; contributes no parameters.
    Sinusoidal,
    /// Learned `context_len × d_model` table.
    Learned,
}

/// Architecture hyperparameters of the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub context_len: usize,
    pub d_ff: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub positional: PositionalEncoding,
}

impl ModelConfig {
    /// A preset with `d_ff = d_model`, sinusoidal positions and 3-d tokens.
    pub const fn new(n_layers: usize, d_model: usize, n_heads: usize) -> Self {
        Self {
            n_layers,
            d_model,
            n_heads,
            context_len: 512,
            d_ff: d_model,
            in_dim: 3,
            out_dim: 3,
            positional: PositionalEncoding::Sinusoidal,
        }
    }

    /// 4 layers, width 64, 4 heads (~0.1M parameters).
    pub const fn small() -> Self {
        Self::new(4, 64, 4)
    }

    /// 10 layers, width 128, 8 heads (~1M parameters).
    pub const fn medium() -> Self {
        Self::new(10, 128, 8)
    }

    /// 12 layers, width 384, 24 heads (~10M parameters).
    pub const fn large() -> Self {
        Self::new(12, 384, 24)
    }

    /// Look up a preset by its nominal size: `0.1M`, `1M` or `10M`.
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "0.1m" | "small" => Ok(Self::small()),
            "1m" | "medium" => Ok(Self::medium()),
            "10m" | "large" => Ok(Self::large()),
            other => Err(Error::InvalidConfig(format!("unknown model preset {other:?}"))),
        }
    }

    pub fn with_context_len(mut self, context_len: usize) -> Self {
        self.context_len = context_len;
        self
    }

    pub fn with_positional(mut self, positional: PositionalEncoding) -> Self {
        self.positional = positional;
        self
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad(format!("all model dimensions must be positive: {self:?}"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.context_len == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return bad(format!("context_len, in_dim and out_dim must be positive: {self:?}"));
        }
        if self.positional == PositionalEncoding::Sinusoidal && !self.d_model.is_multiple_of(2) {
            return bad("sinusoidal positions need an even d_model".into());
        }
        Ok(())
    }
}

/// Exact number of learnable scalars for `cfg`.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let d = cfg.d_model;
    let per_layer = 4 * (d * d + d) // Q, K, V, attention output
        + (d * cfg.d_ff + cfg.d_ff) + (cfg.d_ff * d + d) // feed-forward
        + 4 * d; // two layer norms
    let positional = match cfg.positional {
        PositionalEncoding::Learned => cfg.context_len * d,
        PositionalEncoding::Sinusoidal => 0,
    };
    (cfg.in_dim * d + d) + positional + cfg.n_layers * per_layer + (d * cfg.out_dim + cfg.out_dim)
}
