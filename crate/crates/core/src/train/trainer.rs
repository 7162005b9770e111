use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::log::{MetricsLog, MetricsRecord};
use super::optim::{adam_update, clip_global_norm, AdamConfig, OptimizerState};
use super::schedule::lr_schedule;
use crate::chaos::{BatchStream, GenConfig};
use crate::error::{Error, Result};
use crate::metrics::HeldOutSet;
use crate::model::{grad, init_model, load_checkpoint, save_checkpoint, Batch, Checkpoint, ModelConfig, ModelParams, RngState};

/// Hyperparameters of one pretraining run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Training samples to consume; every context position counts as one.
    pub total_samples: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_frac: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Evaluate on the held-out set every this many optimizer steps.
    pub eval_every: u64,
    pub checkpoint_every: u64,
    /// Resampling interval of the training data.
    pub interval: u32,
    pub seed: u64,
    /// Held-out sequences used for validation loss and IC.
    pub eval_sequences: usize,
    pub dt: f64,
    pub ode_warmup_steps: u64,
    /// Record elapsed wall-clock seconds in the metrics. Off by default so
    /// that reruns produce byte-identical artifacts.
    pub record_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_samples: 10_000_000,
            batch_size: 60,
            base_lr: 1e-3,
            warmup_frac: 0.06,
            adam_beta1: 0.9,
            adam_beta2: 0.95,
            adam_eps: 1e-8,
            weight_decay: 0.1,
            clip_norm: 1.0,
            eval_every: 50,
            checkpoint_every: 100,
            interval: 100,
            seed: 0,
            eval_sequences: 256,
            dt: 0.01,
            ode_warmup_steps: 1000,
            record_wallclock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return bad("warmup_frac must lie strictly between 0 and 1");
        }
        if !(self.base_lr > 0.0 && self.clip_norm > 0.0 && self.adam_eps > 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rate, clip norm and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.total_samples == 0 || self.eval_every == 0 || self.checkpoint_every == 0 {
            return bad("batch_size, total_samples, eval_every and checkpoint_every must be positive");
        }
        if self.eval_sequences == 0 {
            return bad("eval_sequences must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps, weight_decay: self.weight_decay }
    }

    pub fn gen_config(&self, context_len: usize) -> GenConfig {
        GenConfig { dt: self.dt, warmup_steps: self.ode_warmup_steps, context_len, interval: self.interval, seed: 0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where metrics and checkpoints go. Nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Continue from this checkpoint directory.
    pub resume_from: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub metrics: MetricsLog,
    pub checkpoints: Vec<PathBuf>,
    /// Seeds of every training sequence consumed by this invocation.
    pub consumed_seeds: Vec<u64>,
    pub steps: u64,
}

/// Trainer state carried inside a checkpoint next to the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainerExtra {
    train_config: TrainConfig,
    metrics: MetricsLog,
    optimizer_step: u64,
    loss_sum: f64,
    loss_count: u64,
}

pub fn checkpoint_dir(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("step_{step:08}"))
}

/// Run single-epoch streaming pretraining.
///
/// Each step draws a fresh batch from the stream (so no sequence is ever
/// revisited), computes the exact gradient, clips it to `clip_norm`, and
/// applies AdamW at the scheduled learning rate. The held-out set is
/// evaluated before the first step, every `eval_every` steps and at the end.
pub fn train(model_cfg: &ModelConfig, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    let samples_per_step = (cfg.batch_size * model_cfg.context_len) as u64;
    let total_steps = cfg.total_samples.div_ceil(samples_per_step);
    let gen = cfg.gen_config(model_cfg.context_len);

    let (mut params, mut opt, mut metrics, mut stream_pos, mut loss_sum, mut loss_count) = match &opts.resume_from {
        Some(dir) => {
            let ck = load_checkpoint(dir, Some(model_cfg))?;
            let extra: TrainerExtra = serde_json::from_value(ck.extra.clone())
                .map_err(|e| Error::CheckpointMismatch(format!("checkpoint carries no trainer state: {e}")))?;
            if extra.train_config != *cfg {
                return Err(Error::CheckpointMismatch(format!(
                    "training configuration differs from the checkpoint's: {:?}",
                    extra.train_config
                )));
            }
            let (m, v) = ck.moments.ok_or_else(|| Error::CheckpointMismatch("checkpoint has no optimizer moments".into()))?;
            let opt = OptimizerState { m, v, step: extra.optimizer_step };
            (ck.params, opt, extra.metrics, ck.rng.next_sequence_index, extra.loss_sum, extra.loss_count)
        }
        None => {
            let params = init_model(model_cfg, cfg.seed)?;
            let opt = OptimizerState::new(&params);
            (params, opt, MetricsLog::default(), 0, 0.0, 0)
        }
    };
    let mut step = opt.step;
    let mut stream = BatchStream::new(cfg.seed, gen, cfg.batch_size)?.at_position(stream_pos);
    let heldout = HeldOutSet::generate(&gen, cfg.eval_sequences, cfg.seed)?;
    let adam = cfg.adam();
    let clock = Instant::now();
    let time_offset = metrics.last().map_or(0.0, |r| r.seconds);
    let seconds = || if cfg.record_wallclock { time_offset + clock.elapsed().as_secs_f64() } else { 0.0 };

    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let write_metrics = |m: &MetricsLog| -> Result<()> {
        match &opts.out_dir {
            Some(dir) => m.write_csv(&dir.join("metrics.csv")),
            None => Ok(()),
        }
    };

    if metrics.records.is_empty() {
        let ev = heldout.evaluate(&params)?;
        metrics.push(MetricsRecord {
            samples_seen: 0,
            step: 0,
            train_loss: None,
            val_loss: ev.loss,
            ic_x: ev.ic[0],
            ic_y: ev.ic[1],
            ic_z: ev.ic[2],
            lr: lr_schedule(0, cfg.total_samples, cfg.warmup_frac, cfg.base_lr),
            seconds: seconds(),
        })?;
        write_metrics(&metrics)?;
    }

    let mut checkpoints = Vec::new();
    let mut consumed_seeds = Vec::new();
    while step < total_steps {
        let seqs = stream.next_batch();
        consumed_seeds.extend(seqs.iter().map(|s| s.seed));
        let batch = Batch::from_sequences(&seqs)?;
        let (loss, mut g) = grad(&params, &batch)?;
        clip_global_norm(&mut g, cfg.clip_norm);
        step += 1;
        let samples_seen = step * samples_per_step;
        let lr = lr_schedule(samples_seen, cfg.total_samples, cfg.warmup_frac, cfg.base_lr);
        adam_update(&mut params, &g, &mut opt, lr, &adam)?;
        if !params.is_finite() {
            return Err(Error::NonFiniteActivation("parameters after update"));
        }
        loss_sum += loss;
        loss_count += 1;

        let last = step == total_steps;
        if step % cfg.eval_every == 0 || last {
            let ev = heldout.evaluate(&params)?;
            metrics.push(MetricsRecord {
                samples_seen,
                step,
                train_loss: Some(loss_sum / loss_count as f64),
                val_loss: ev.loss,
                ic_x: ev.ic[0],
                ic_y: ev.ic[1],
                ic_z: ev.ic[2],
                lr,
                seconds: seconds(),
            })?;
            log::info!(
                "step {step}/{total_steps} samples {samples_seen} train {:.4} val {:.4} ic_y {:.4} lr {lr:.2e}",
                loss_sum / loss_count as f64,
                ev.loss,
                ev.ic[1]
            );
            loss_sum = 0.0;
            loss_count = 0;
            write_metrics(&metrics)?;
        }
        stream_pos = stream.position();
        if let Some(dir) = &opts.out_dir {
            if step % cfg.checkpoint_every == 0 || last {
                let extra = TrainerExtra { train_config: *cfg, metrics: metrics.clone(), optimizer_step: opt.step, loss_sum, loss_count };
                let ck = Checkpoint {
                    params: params.clone(),
                    moments: Some((opt.m.clone(), opt.v.clone())),
                    step,
                    samples_seen,
                    rng: RngState { base_seed: cfg.seed, next_sequence_index: stream_pos },
                    extra: serde_json::to_value(&extra)?,
                };
                checkpoints.push(save_checkpoint(&ck, &checkpoint_dir(dir, step))?);
            }
        }
    }

    Ok(TrainOutcome { params, optimizer: opt, metrics, checkpoints, consumed_seeds, steps: step })
}
