use chaoscast::chaos::{export_attractor, GenConfig};
use chaoscast::metrics::{fit_scaling_law, samples_to_threshold, write_ic_curve, HeldOutSet, IcCurve, ScalingPoint};
use chaoscast::model::load_checkpoint;
use chaoscast::train::MetricsLog;

use super::{files_under, write_csv, Ctx};
use crate::cli::EvalArgs;
use crate::config::{horizon_pair, UsageError};
use crate::manifest::RunRecord;

pub fn run(ctx: &Ctx, args: &EvalArgs) -> anyhow::Result<RunRecord> {
    if args.logs.is_empty() && args.checkpoint.is_none() {
        return Err(UsageError("eval needs at least one --log or a --checkpoint".into()).into());
    }
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut logs = args.logs.iter().map(|s| horizon_pair(s)).collect::<Result<Vec<_>, _>>()?;
    logs.sort_by_key(|(h, _)| *h);
    if logs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(UsageError("each horizon may have only one --log".into()).into());
    }

    let mut reached = Vec::new();
    let mut rows = Vec::new();
    for (horizon, path) in &logs {
        let log = MetricsLog::read_csv(path)?;
        inputs.push(path.clone());
        let curve = IcCurve::new(*horizon, log.records.iter().map(|r| (r.samples_seen, r.ic_y)).collect())?;
        let out = ctx.out_dir.join(format!("ic_curve_h{horizon}.csv"));
        write_ic_curve(&curve, &out)?;
        outputs.push(out);
        match samples_to_threshold(&curve, args.threshold, args.window) {
            Some(s) => {
                rows.push(vec![horizon.to_string(), s.to_string(), "reached".into()]);
                reached.push(ScalingPoint { horizon: *horizon, samples_to_threshold: s });
            }
            None => {
                log::warn!("horizon {horizon} never reaches IC {}", args.threshold);
                rows.push(vec![horizon.to_string(), String::new(), "not_reached".into()]);
            }
        }
    }
    if !logs.is_empty() {
        let path = ctx.out_dir.join("scaling_points.csv");
        write_csv(&path, &["horizon", "samples_to_threshold", "status"], rows)?;
        outputs.push(path);
        // horizons that never crossed are excluded from the fit
        match fit_scaling_law(&reached) {
            Ok(fit) => {
                let path = ctx.out_dir.join("scaling_fit.json");
                std::fs::write(&path, serde_json::to_string_pretty(&fit)? + "\n")?;
                outputs.push(path);
                println!("log10(samples) = {:.6}·horizon + {:.4} (r2 {:.4})", fit.slope, fit.intercept, fit.r2);
            }
            Err(e) => log::warn!("no scaling fit: {e}"),
        }
    }

    let mut eval_config = serde_json::Value::Null;
    if let Some(dir) = &args.checkpoint {
        let params = load_checkpoint(dir, None)?.params;
        inputs.extend(files_under(dir)?);
        let gen = GenConfig { interval: args.interval, context_len: params.config().context_len, ..GenConfig::default() };
        let set = HeldOutSet::generate(&gen, args.eval_sequences, ctx.seed)?;
        let pred = set.predict(&params)?;
        let result = set.evaluate(&params)?;
        println!("val_loss {:.6} ic_x {:.4} ic_y {:.4} ic_z {:.4}", result.loss, result.ic[0], result.ic[1], result.ic[2]);
        let path = ctx.out_dir.join("eval.json");
        std::fs::write(&path, serde_json::to_string_pretty(&result)? + "\n")?;
        outputs.push(path);

        let predicted: Vec<[f64; 3]> = pred.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        let targets: Vec<[f64; 3]> = set.sequences.iter().flat_map(|s| s.targets.iter().copied()).collect();
        for (name, pts) in [("predicted_attractor.csv", &predicted), ("target_attractor.csv", &targets)] {
            let path = ctx.out_dir.join(name);
            export_attractor(pts, &path)?;
            outputs.push(path);
        }
        eval_config = serde_json::json!({ "checkpoint": dir, "interval": args.interval, "eval_sequences": args.eval_sequences });
    }

    let config = serde_json::json!({
        "logs": logs,
        "threshold": args.threshold,
        "window": args.window,
        "checkpoint_eval": eval_config,
    });
    Ok(RunRecord { config, inputs, outputs })
}
