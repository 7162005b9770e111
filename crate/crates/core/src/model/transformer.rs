//! Forward pass, loss and hand-written reverse pass of the pre-norm decoder.
//!
//! Per layer, with `h` the residual stream of one sequence (`T × d`):
//!
//! ```text
//! a = LN1(h)
//! q, k, v = a·W_Q + b_Q, a·W_K + b_K, a·W_V + b_V
//! o_head = softmax(q_head·k_headᵀ / √d_head + M)·v_head     (M = causal mask)
//! h = h + concat(o)·W_O + b_O
//! m = LN2(h)
//! h = h + GELU(m·W_1 + b_1)·W_2 + b_2
//! ```
//!
//! The token embedding is one affine map of the 3-vector plus the positional
//! encoding, and the prediction for position `t` is `h_t·W_out + b_out`.
//!
//! Attention scores are computed in row blocks of [`BLOCK`] positions, and a
//! block only ever touches key columns up to its own last row. Every output
//! row is therefore computed by exactly the same arithmetic regardless of what
//! happens at later positions, which makes causality hold bit-for-bit.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut2, Axis};
use rayon::prelude::*;

use super::config::{ModelConfig, PositionalEncoding};
use super::params::{LayerSlots, ModelParams};
use crate::error::{Error, Result};

/// Row-block size of the causal attention kernels.
pub const BLOCK: usize = 64;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

/// Inputs and one-step-ahead targets for a batch of sequences, `B × T × 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array3<f64>,
    pub targets: Array3<f64>,
}

impl Batch {
    pub fn new(inputs: Array3<f64>, targets: Array3<f64>) -> Result<Self> {
        if inputs.shape() != targets.shape() {
            return Err(Error::ShapeMismatch(format!(
                "inputs {:?} vs targets {:?}",
                inputs.shape(),
                targets.shape()
            )));
        }
        if inputs.shape()[0] == 0 || inputs.shape()[1] == 0 {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_sequences(seqs: &[crate::chaos::TrainingSequence]) -> Result<Self> {
        let t = seqs.first().map_or(0, |s| s.inputs.len());
        let mut inputs = Array3::zeros((seqs.len(), t, 3));
        let mut targets = Array3::zeros((seqs.len(), t, 3));
        for (b, seq) in seqs.iter().enumerate() {
            if seq.inputs.len() != t {
                return Err(Error::ShapeMismatch("sequences of different lengths in one batch".into()));
            }
            for (i, (x, y)) in seq.inputs.iter().zip(&seq.targets).enumerate() {
                for k in 0..3 {
                    inputs[[b, i, k]] = x[k];
                    targets[[b, i, k]] = y[k];
                }
            }
        }
        Self::new(inputs, targets)
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn seq_len(&self) -> usize {
        self.inputs.shape()[1]
    }
}

/// Fixed sine/cosine position table, `len × d`.
pub fn sinusoidal_table(len: usize, d: usize) -> Array2<f64> {
    let mut p = Array2::zeros((len, d));
    for t in 0..len {
        for i in 0..d / 2 {
            let freq = 10_000f64.powf(-((2 * i) as f64) / d as f64);
            let angle = t as f64 * freq;
            p[[t, 2 * i]] = angle.sin();
            p[[t, 2 * i + 1]] = angle.cos();
        }
    }
    p
}

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn affine(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    out.rows_mut().into_iter().for_each(|mut r| r.assign(&b));
    general_mat_mul(1.0, &x, &w, 1.0, &mut out);
    out
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: ArrayView1<f64>, bias: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let r = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * r);
        rstd.push(r);
    }
    let y = &xhat * &gain + bias;
    (y, LnCache { xhat, rstd })
}

/// Returns the gradient with respect to the norm input and accumulates the
/// gain/bias gradients.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: ArrayView1<f64>,
    grads: &mut ModelParams,
    gain_slot: super::params::Slot,
    bias_slot: super::params::Slot,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    {
        let mut g = grads.vec_mut(gain_slot);
        g += &(dy * &cache.xhat).sum_axis(Axis(0));
    }
    {
        let mut b = grads.vec_mut(bias_slot);
        b += &dy.sum_axis(Axis(0));
    }
    let mut dx = dy * &gain;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
        row.iter_mut().zip(xh).for_each(|(v, &x)| *v = r * (*v - mean_d - x * mean_dx));
    }
    dx
}

/// Causal attention for one head. Writes the head output into `out` and,
/// when `probs` is given, keeps the attention matrix (`T × T`, zero above the
/// diagonal).
fn attention_head(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    mut out: ArrayViewMut2<f64>,
    probs: &mut Array2<f64>,
) {
    let t = q.nrows();
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    for r0 in (0..t).step_by(BLOCK) {
        let r1 = (r0 + BLOCK).min(t);
        let mut blk = probs.slice_mut(s![r0..r1, 0..r1]);
        general_mat_mul(scale, &q.slice(s![r0..r1, ..]), &k.slice(s![0..r1, ..]).t(), 0.0, &mut blk);
        for (off, mut row) in blk.rows_mut().into_iter().enumerate() {
            let last = r0 + off;
            let live = row.slice(s![..=last]);
            let max = live.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..=last {
                let e = (row[j] - max).exp();
                row[j] = e;
                sum += e;
            }
            let inv = 1.0 / sum;
            for j in 0..=last {
                row[j] *= inv;
            }
            for j in last + 1..r1 {
                row[j] = 0.0;
            }
        }
        let blk = probs.slice(s![r0..r1, 0..r1]);
        general_mat_mul(1.0, &blk, &v.slice(s![0..r1, ..]), 0.0, &mut out.slice_mut(s![r0..r1, ..]));
    }
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln2: LnCache,
    m: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

struct RowCache {
    layers: Vec<LayerCache>,
    h_final: Array2<f64>,
}

fn check_finite(a: &Array2<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation(what))
    }
}

fn embed(p: &ModelParams, x: ArrayView2<f64>, sinusoid: Option<&Array2<f64>>) -> Array2<f64> {
    let l = p.layout();
    let t = x.nrows();
    let mut h = affine(x, p.mat(l.embed_w), p.vec(l.embed_b));
    match (l.pos, sinusoid) {
        (Some(slot), _) => h += &p.mat(slot).slice(s![0..t, ..]),
        (None, Some(table)) => h += &table.slice(s![0..t, ..]),
        (None, None) => unreachable!("sinusoidal table required"),
    }
    h
}

fn layer_forward(
    p: &ModelParams,
    ls: &LayerSlots,
    cfg: &ModelConfig,
    mut h: Array2<f64>,
    keep: bool,
) -> (Array2<f64>, Option<LayerCache>) {
    let t = h.nrows();
    let dh = cfg.d_head();
    let (a, ln1) = layer_norm(&h, p.vec(ls.ln1_gain), p.vec(ls.ln1_bias));
    let q = affine(a.view(), p.mat(ls.w_q), p.vec(ls.b_q));
    let k = affine(a.view(), p.mat(ls.w_k), p.vec(ls.b_k));
    let v = affine(a.view(), p.mat(ls.w_v), p.vec(ls.b_v));
    let mut o = Array2::zeros((t, cfg.d_model));
    let mut probs = Vec::new();
    let mut scratch = Array2::zeros((t, t));
    for head in 0..cfg.n_heads {
        let c = head * dh..(head + 1) * dh;
        attention_head(
            q.slice(s![.., c.clone()]),
            k.slice(s![.., c.clone()]),
            v.slice(s![.., c.clone()]),
            o.slice_mut(s![.., c]),
            &mut scratch,
        );
        if keep {
            probs.push(std::mem::replace(&mut scratch, Array2::zeros((t, t))));
        }
    }
    h += &affine(o.view(), p.mat(ls.w_o), p.vec(ls.b_o));
    let (m, ln2) = layer_norm(&h, p.vec(ls.ln2_gain), p.vec(ls.ln2_bias));
    let u = affine(m.view(), p.mat(ls.w_1), p.vec(ls.b_1));
    let g = u.mapv(gelu);
    h += &affine(g.view(), p.mat(ls.w_2), p.vec(ls.b_2));
    let cache = keep.then(|| LayerCache { ln1, a, q, k, v, probs, o, ln2, m, u, g });
    (h, cache)
}

fn forward_row(
    p: &ModelParams,
    x: ArrayView2<f64>,
    sinusoid: Option<&Array2<f64>>,
    keep: bool,
) -> Result<(Array2<f64>, Option<RowCache>)> {
    let cfg = *p.config();
    let l = p.layout();
    let mut h = embed(p, x, sinusoid);
    let mut caches = Vec::new();
    for ls in &l.layers {
        let (next, cache) = layer_forward(p, ls, &cfg, h, keep);
        h = next;
        caches.extend(cache);
    }
    check_finite(&h, "decoder output")?;
    let pred = affine(h.view(), p.mat(l.out_w), p.vec(l.out_b));
    check_finite(&pred, "prediction")?;
    let cache = keep.then(|| RowCache { layers: caches, h_final: h });
    Ok((pred, cache))
}

fn accumulate_matmul_t(grads: &mut ModelParams, slot: super::params::Slot, x: &Array2<f64>, dy: &Array2<f64>) {
    // dW += xᵀ·dy
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grads.mat_mut(slot));
}

fn accumulate_colsum(grads: &mut ModelParams, slot: super::params::Slot, dy: &Array2<f64>) {
    let mut b = grads.vec_mut(slot);
    b += &dy.sum_axis(Axis(0));
}

fn backward_row(p: &ModelParams, x: ArrayView2<f64>, cache: RowCache, dpred: &Array2<f64>, grads: &mut ModelParams) {
    let cfg = *p.config();
    let l = p.layout().clone();
    let t = x.nrows();
    let dh = cfg.d_head();
    let scale = 1.0 / (dh as f64).sqrt();

    accumulate_matmul_t(grads, l.out_w, &cache.h_final, dpred);
    accumulate_colsum(grads, l.out_b, dpred);
    let mut dh_res = dpred.dot(&p.mat(l.out_w).t());

    for (ls, c) in l.layers.iter().zip(cache.layers).rev() {
        // feed-forward branch
        accumulate_matmul_t(grads, ls.w_2, &c.g, &dh_res);
        accumulate_colsum(grads, ls.b_2, &dh_res);
        let mut du = dh_res.dot(&p.mat(ls.w_2).t());
        du.zip_mut_with(&c.u, |d, &u| *d *= gelu_grad(u));
        accumulate_matmul_t(grads, ls.w_1, &c.m, &du);
        accumulate_colsum(grads, ls.b_1, &du);
        let dm = du.dot(&p.mat(ls.w_1).t());
        dh_res += &layer_norm_backward(&dm, &c.ln2, p.vec(ls.ln2_gain), grads, ls.ln2_gain, ls.ln2_bias);

        // attention branch
        accumulate_matmul_t(grads, ls.w_o, &c.o, &dh_res);
        accumulate_colsum(grads, ls.b_o, &dh_res);
        let d_o = dh_res.dot(&p.mat(ls.w_o).t());
        let mut dq = Array2::zeros((t, cfg.d_model));
        let mut dk = Array2::zeros((t, cfg.d_model));
        let mut dv = Array2::zeros((t, cfg.d_model));
        let mut ds_buf = Array2::zeros((BLOCK.min(t), t));
        for (head, probs) in c.probs.iter().enumerate() {
            let cols = head * dh..(head + 1) * dh;
            let qh = c.q.slice(s![.., cols.clone()]);
            let kh = c.k.slice(s![.., cols.clone()]);
            let vh = c.v.slice(s![.., cols.clone()]);
            let doh = d_o.slice(s![.., cols.clone()]);
            for r0 in (0..t).step_by(BLOCK) {
                let r1 = (r0 + BLOCK).min(t);
                let pb = probs.slice(s![r0..r1, 0..r1]);
                let mut ds = ds_buf.slice_mut(s![0..r1 - r0, 0..r1]);
                // dP = dO·Vᵀ, then softmax backward row by row
                general_mat_mul(1.0, &doh.slice(s![r0..r1, ..]), &vh.slice(s![0..r1, ..]).t(), 0.0, &mut ds);
                for (off, (mut drow, prow)) in ds.rows_mut().into_iter().zip(pb.rows()).enumerate() {
                    let last = r0 + off;
                    let dot: f64 = (0..=last).map(|j| drow[j] * prow[j]).sum();
                    for j in 0..=last {
                        drow[j] = prow[j] * (drow[j] - dot) * scale;
                    }
                    for j in last + 1..r1 {
                        drow[j] = 0.0;
                    }
                }
                general_mat_mul(1.0, &ds, &kh.slice(s![0..r1, ..]), 1.0, &mut dq.slice_mut(s![r0..r1, cols.clone()]));
                general_mat_mul(
                    1.0,
                    &ds.t(),
                    &qh.slice(s![r0..r1, ..]),
                    1.0,
                    &mut dk.slice_mut(s![0..r1, cols.clone()]),
                );
                general_mat_mul(
                    1.0,
                    &pb.t(),
                    &doh.slice(s![r0..r1, ..]),
                    1.0,
                    &mut dv.slice_mut(s![0..r1, cols.clone()]),
                );
            }
        }
        accumulate_matmul_t(grads, ls.w_q, &c.a, &dq);
        accumulate_colsum(grads, ls.b_q, &dq);
        accumulate_matmul_t(grads, ls.w_k, &c.a, &dk);
        accumulate_colsum(grads, ls.b_k, &dk);
        accumulate_matmul_t(grads, ls.w_v, &c.a, &dv);
        accumulate_colsum(grads, ls.b_v, &dv);
        let mut da = dq.dot(&p.mat(ls.w_q).t());
        general_mat_mul(1.0, &dk, &p.mat(ls.w_k).t(), 1.0, &mut da);
        general_mat_mul(1.0, &dv, &p.mat(ls.w_v).t(), 1.0, &mut da);
        dh_res += &layer_norm_backward(&da, &c.ln1, p.vec(ls.ln1_gain), grads, ls.ln1_gain, ls.ln1_bias);
    }

    let xo = x.to_owned();
    accumulate_matmul_t(grads, l.embed_w, &xo, &dh_res);
    accumulate_colsum(grads, l.embed_b, &dh_res);
    if let Some(slot) = l.pos {
        let mut g = grads.mat_mut(slot);
        let mut rows = g.slice_mut(s![0..t, ..]);
        rows += &dh_res;
    }
}

fn check_inputs(cfg: &ModelConfig, inputs: &ArrayView3<f64>) -> Result<()> {
    let sh = inputs.shape();
    if sh[0] == 0 || sh[1] == 0 {
        return Err(Error::ShapeMismatch("empty input".into()));
    }
    if sh[1] > cfg.context_len {
        return Err(Error::ShapeMismatch(format!(
            "sequence length {} exceeds context length {}",
            sh[1], cfg.context_len
        )));
    }
    if sh[2] != cfg.in_dim {
        return Err(Error::ShapeMismatch(format!("token width {} but model expects {}", sh[2], cfg.in_dim)));
    }
    Ok(())
}

fn sinusoid_for(p: &ModelParams, t: usize) -> Option<Array2<f64>> {
    (p.config().positional == PositionalEncoding::Sinusoidal).then(|| sinusoidal_table(t, p.config().d_model))
}

/// One-step-ahead predictions for every position of every sequence.
///
/// `inputs` is `B × T × in_dim` with `1 ≤ T ≤ context_len`; the result is
/// `B × T × out_dim`, where row `t` is the forecast of the token at `t + 1`
/// and depends only on `inputs[.., 0..=t, ..]`.
pub fn forward(params: &ModelParams, inputs: ArrayView3<f64>) -> Result<Array3<f64>> {
    let cfg = *params.config();
    check_inputs(&cfg, &inputs)?;
    let (b, t) = (inputs.shape()[0], inputs.shape()[1]);
    let sinusoid = sinusoid_for(params, t);
    let rows: Vec<Array2<f64>> = (0..b)
        .into_par_iter()
        .map(|i| forward_row(params, inputs.index_axis(Axis(0), i), sinusoid.as_ref(), false).map(|(p, _)| p))
        .collect::<Result<_>>()?;
    let mut out = Array3::zeros((b, t, cfg.out_dim));
    for (i, r) in rows.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(&r);
    }
    Ok(out)
}

/// Mean over batch and positions of the squared error summed over the
/// output dimensions.
pub fn mse_loss(predictions: ArrayView3<f64>, targets: ArrayView3<f64>) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::ShapeMismatch(format!(
            "predictions {:?} vs targets {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    let n = (predictions.shape()[0] * predictions.shape()[1]) as f64;
    let sum: f64 = predictions.iter().zip(targets.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / n)
}

/// Loss and exact gradient of [`mse_loss`]`(forward(params, inputs), targets)`
/// with respect to every parameter.
///
/// Rows are processed in parallel, but per-row gradients are summed in row
/// order, so the result does not depend on the number of workers.
pub fn grad(params: &ModelParams, batch: &Batch) -> Result<(f64, ModelParams)> {
    let cfg = *params.config();
    check_inputs(&cfg, &batch.inputs.view())?;
    let (b, t) = (batch.batch_size(), batch.seq_len());
    let sinusoid = sinusoid_for(params, t);
    let norm = 2.0 / (b * t) as f64;
    let mut total = params.zeros_like();
    let mut preds = Array3::zeros((b, t, cfg.out_dim));
    let chunk = rayon::current_num_threads().max(1);
    for start in (0..b).step_by(chunk) {
        let rows: Vec<(Array2<f64>, ModelParams)> = (start..(start + chunk).min(b))
            .into_par_iter()
            .map(|i| {
                let x = batch.inputs.index_axis(Axis(0), i);
                let (pred, cache) = forward_row(params, x, sinusoid.as_ref(), true)?;
                let mut dpred = &pred - &batch.targets.index_axis(Axis(0), i);
                dpred.mapv_inplace(|v| v * norm);
                let mut g = params.zeros_like();
                backward_row(params, x, cache.expect("cache kept"), &dpred, &mut g);
                Ok((pred, g))
            })
            .collect::<Result<_>>()?;
        for (off, (pred, g)) in rows.into_iter().enumerate() {
            preds.index_axis_mut(Axis(0), start + off).assign(&pred);
            total.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
        }
    }
    let loss = mse_loss(preds.view(), batch.targets.view())?;
    Ok((loss, total))
}

/// Attention matrices of every layer and head for one sequence
/// (`layers × heads`, each `T × T`). Diagnostic only.
pub fn attention_maps(params: &ModelParams, inputs: ArrayView2<f64>) -> Result<Vec<Vec<Array2<f64>>>> {
    let cfg = *params.config();
    check_inputs(&cfg, &inputs.view().insert_axis(Axis(0)))?;
    let sinusoid = sinusoid_for(params, inputs.nrows());
    let (_, cache) = forward_row(params, inputs, sinusoid.as_ref(), true)?;
    Ok(cache.expect("cache kept").layers.into_iter().map(|c| c.probs).collect())
}

/// Autoregressive rollout: repeatedly predict the next token from the last
/// `context_len` tokens and append it.
pub fn generate_autoregressive(params: &ModelParams, context: &[[f64; 3]], steps: usize) -> Result<Vec<[f64; 3]>> {
    let cfg = *params.config();
    if context.is_empty() {
        return Err(Error::ShapeMismatch("empty context".into()));
    }
    let mut seq = context.to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let window = &seq[seq.len().saturating_sub(cfg.context_len)..];
        let mut x = Array3::zeros((1, window.len(), 3));
        for (i, p) in window.iter().enumerate() {
            for k in 0..3 {
                x[[0, i, k]] = p[k];
            }
        }
        let y = forward(params, x.view())?;
        let last = y.index_axis(Axis(1), window.len() - 1);
        let next = [last[[0, 0]], last[[0, 1]], last[[0, 2]]];
        out.push(next);
        seq.push(next);
    }
    Ok(out)
}
