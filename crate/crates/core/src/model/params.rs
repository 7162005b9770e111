use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{param_count, ModelConfig, PositionalEncoding};
use crate::error::Result;

/// Standard deviation of the initial weight distribution.
pub const INIT_STD: f64 = 0.02;

/// What a tensor is, for initialization and weight-decay purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    /// Weight matrix writing into the residual stream (`W_O`, `W_2`).
    ResidualWeight,
    Bias,
    NormGain,
    NormBias,
    Positional,
}

impl ParamKind {
    /// Whether decoupled weight decay applies to this tensor.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::ResidualWeight)
    }
}

/// Location of one tensor inside the flat parameter buffer. Vectors have `rows == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlots {
    pub ln1_gain: Slot,
    pub ln1_bias: Slot,
    pub w_q: Slot,
    pub b_q: Slot,
    pub w_k: Slot,
    pub b_k: Slot,
    pub w_v: Slot,
    pub b_v: Slot,
    pub w_o: Slot,
    pub b_o: Slot,
    pub ln2_gain: Slot,
    pub ln2_bias: Slot,
    pub w_1: Slot,
    pub b_1: Slot,
    pub w_2: Slot,
    pub b_2: Slot,
}

/// Named entry of the tensor index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub kind: ParamKind,
}

/// Where every tensor of a [`ModelConfig`] lives in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embed_w: Slot,
    pub embed_b: Slot,
    pub pos: Option<Slot>,
    pub layers: Vec<LayerSlots>,
    pub out_w: Slot,
    pub out_b: Slot,
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
}

struct Builder {
    offset: usize,
    tensors: Vec<TensorInfo>,
}

impl Builder {
    fn push(&mut self, name: String, rows: usize, cols: usize, kind: ParamKind) -> Slot {
        let slot = Slot { offset: self.offset, rows, cols };
        let shape = if rows == 1 { vec![cols] } else { vec![rows, cols] };
        self.tensors.push(TensorInfo { name, shape, offset: self.offset, kind });
        self.offset += rows * cols;
        slot
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        use ParamKind::*;
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let mut b = Builder { offset: 0, tensors: Vec::new() };
        let embed_w = b.push("embed.w".into(), cfg.in_dim, d, Weight);
        let embed_b = b.push("embed.b".into(), 1, d, Bias);
        let pos = match cfg.positional {
            PositionalEncoding::Learned => Some(b.push("pos".into(), cfg.context_len, d, Positional)),
            PositionalEncoding::Sinusoidal => None,
        };
        let layers = (0..cfg.n_layers)
            .map(|i| {
                let mut p = |n: &str, r, c, k| b.push(format!("layers.{i}.{n}"), r, c, k);
                LayerSlots {
                    ln1_gain: p("ln1.gain", 1, d, NormGain),
                    ln1_bias: p("ln1.bias", 1, d, NormBias),
                    w_q: p("attn.w_q", d, d, Weight),
                    b_q: p("attn.b_q", 1, d, Bias),
                    w_k: p("attn.w_k", d, d, Weight),
                    b_k: p("attn.b_k", 1, d, Bias),
                    w_v: p("attn.w_v", d, d, Weight),
                    b_v: p("attn.b_v", 1, d, Bias),
                    w_o: p("attn.w_o", d, d, ResidualWeight),
                    b_o: p("attn.b_o", 1, d, Bias),
                    ln2_gain: p("ln2.gain", 1, d, NormGain),
                    ln2_bias: p("ln2.bias", 1, d, NormBias),
                    w_1: p("ffn.w_1", d, f, Weight),
                    b_1: p("ffn.b_1", 1, f, Bias),
                    w_2: p("ffn.w_2", f, d, ResidualWeight),
                    b_2: p("ffn.b_2", 1, d, Bias),
                }
            })
            .collect();
        let out_w = b.push("out.w".into(), d, cfg.out_dim, Weight);
        let out_b = b.push("out.b".into(), 1, cfg.out_dim, Bias);
        Layout { embed_w, embed_b, pos, layers, out_w, out_b, total: b.offset, tensors: b.tensors }
    }
}

/// All learnable parameters of a decoder, stored in one flat buffer.
///
/// The same type also holds gradients and optimizer moments, which share the
/// parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Layout,
    pub data: Vec<f64>,
}

impl ModelParams {
    /// All-zero buffer with the layout of `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        debug_assert_eq!(layout.total, param_count(cfg));
        let data = vec![0.0; layout.total];
        Ok(Self { config: *cfg, layout, data })
    }

    pub fn zeros_like(&self) -> Self {
        Self { config: self.config, layout: self.layout.clone(), data: vec![0.0; self.data.len()] }
    }

    pub fn from_data(cfg: &ModelConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        if data.len() != p.data.len() {
            return Err(crate::Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mat(&self, s: Slot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((s.rows, s.cols), &self.data[s.range()]).expect("slot within buffer")
    }

    pub fn mat_mut(&mut self, s: Slot) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((s.rows, s.cols), &mut self.data[s.range()]).expect("slot within buffer")
    }

    pub fn vec(&self, s: Slot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[s.range()])
    }

    pub fn vec_mut(&mut self, s: Slot) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.data[s.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Initialize a model: weights `N(0, 0.02²)`, residual-output projections
/// additionally scaled by `1/√(2·n_layers)`, biases zero, norm gains one.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut p = ModelParams::zeros(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let residual_scale = 1.0 / (2.0 * cfg.n_layers as f64).sqrt();
    for t in p.layout.tensors.clone() {
        let len: usize = t.shape.iter().product();
        let dst = &mut p.data[t.offset..t.offset + len];
        match t.kind {
            ParamKind::Weight | ParamKind::Positional => dst.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
            ParamKind::ResidualWeight => {
                dst.iter_mut().for_each(|v| *v = normal.sample(&mut rng) * residual_scale)
            }
            ParamKind::NormGain => dst.fill(1.0),
            ParamKind::Bias | ParamKind::NormBias => {}
        }
    }
    Ok(p)
}
