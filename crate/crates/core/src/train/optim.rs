use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Scale `grads` so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping; gradients at or under the limit are left
/// untouched.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.data.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.data.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Adam hyperparameters; weight decay is decoupled from the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.1 }
    }
}

/// First/second moment buffers and the number of updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// One bias-corrected AdamW step:
/// `θ ← θ − lr·(m̂/(√v̂ + ε) + λ·θ)`, with `λ` applied only to weight matrices
/// (never to biases, norm parameters or a learned position table).
pub fn adam_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.config() != params.config() || state.m.config() != params.config() {
        return Err(Error::ShapeMismatch("optimizer buffers do not match the parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let tensors = params.layout().tensors.clone();
    for info in &tensors {
        let len: usize = info.shape.iter().product();
        let r = info.offset..info.offset + len;
        let decay = if info.kind.decays() { cfg.weight_decay } else { 0.0 };
        let theta = &mut params.data[r.clone()];
        let (m, v) = (&mut state.m.data[r.clone()], &mut state.v.data[r.clone()]);
        for (((p, &g), m), v) in theta.iter_mut().zip(&grads.data[r]).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + decay * *p);
        }
    }
    Ok(())
}
