//! Decoder-only transformer over 3-dimensional tokens.

mod checkpoint;
mod config;
mod params;
mod transformer;

use ndarray::{Array3, ArrayView3};

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, Checkpoint, CheckpointManifest, RngState, TensorEntry,
};
pub use config::{param_count, ModelConfig, PositionalEncoding};
pub use params::{init_model, LayerSlots, Layout, ModelParams, ParamKind, Slot, TensorInfo, INIT_STD};
pub use transformer::{
    attention_maps, forward, generate_autoregressive, grad, mse_loss, sinusoidal_table, Batch, BLOCK,
};

use crate::error::Result;

/// Anything that maps `B × T × 3` contexts to per-position one-step-ahead
/// forecasts of the same shape.
pub trait Forecaster: Sync {
    fn context_len(&self) -> usize;

    fn forecast(&self, inputs: ArrayView3<f64>) -> Result<Array3<f64>>;
}

impl Forecaster for ModelParams {
    fn context_len(&self) -> usize {
        self.config().context_len
    }

    fn forecast(&self, inputs: ArrayView3<f64>) -> Result<Array3<f64>> {
        forward(self, inputs)
    }
}

/// Predicts that every token repeats: the forecast at position `t` is the
/// input at `t`. This is the autocorrelation baseline in model form.
#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    pub context_len: usize,
}

impl Forecaster for Persistence {
    fn context_len(&self) -> usize {
        self.context_len
    }

    fn forecast(&self, inputs: ArrayView3<f64>) -> Result<Array3<f64>> {
        Ok(inputs.to_owned())
    }
}
