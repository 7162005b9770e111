use chaoscast::model::{param_count, ModelConfig};
use chaoscast::train::{train, TrainConfig, TrainOptions};

use super::{files_under, Ctx};
use crate::cli::TrainArgs;
use crate::config::UsageError;
use crate::manifest::RunRecord;

/// Resolve the model: `--preset` wins over the config file's `model`, which
/// wins over its `preset`; the default is the 0.1M preset.
fn model_config(ctx: &Ctx, args: &TrainArgs) -> anyhow::Result<ModelConfig> {
    if let Some(p) = &args.preset {
        return Ok(ModelConfig::preset(p)?);
    }
    if let Some(m) = ctx.file.model {
        return Ok(m);
    }
    Ok(ModelConfig::preset(ctx.file.preset.as_deref().unwrap_or("0.1M"))?)
}

pub fn resolve(ctx: &Ctx, args: &TrainArgs) -> anyhow::Result<(ModelConfig, TrainConfig)> {
    let model = model_config(ctx, args)?;
    let mut cfg = ctx.file.train.unwrap_or_default();
    cfg.seed = ctx.seed;
    if let Some(v) = args.interval {
        cfg.interval = v;
    }
    if let Some(v) = args.total_samples {
        cfg.total_samples = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.base_lr = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = args.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    if let Some(v) = args.eval_sequences {
        cfg.eval_sequences = v;
    }
    cfg.record_wallclock |= args.wallclock;
    Ok((model, cfg))
}

pub fn run(ctx: &Ctx, args: &TrainArgs) -> anyhow::Result<RunRecord> {
    let (model, cfg) = resolve(ctx, args)?;
    if let Some(r) = &args.resume {
        if !r.join("manifest.json").exists() {
            return Err(UsageError(format!("--resume {}: no checkpoint manifest there", r.display())).into());
        }
    }
    log::info!("training {} parameters for {} samples", param_count(&model), cfg.total_samples);
    let opts = TrainOptions { out_dir: Some(ctx.out_dir.clone()), resume_from: args.resume.clone() };
    let outcome = train(&model, &cfg, &opts)?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "step {} samples {} val_loss {:.6} ic_x {:.4} ic_y {:.4} ic_z {:.4}",
            last.step, last.samples_seen, last.val_loss, last.ic_x, last.ic_y, last.ic_z
        );
    }
    let mut outputs = vec![ctx.out_dir.join("metrics.csv")];
    for ck in &outcome.checkpoints {
        outputs.extend(files_under(ck)?);
    }
    let mut inputs = Vec::new();
    if let Some(r) = &args.resume {
        inputs.extend(files_under(r)?);
    }
    let config = serde_json::json!({ "model": model, "train": cfg, "resume": args.resume });
    Ok(RunRecord { config, inputs, outputs })
}
