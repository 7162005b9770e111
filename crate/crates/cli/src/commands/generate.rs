use anyhow::Context;
use chaoscast::chaos::{autocorrelation, derive_seed, export_attractor, generate_sequence, GenConfig};

use super::{write_csv, Ctx};
use crate::cli::GenerateArgs;
use crate::config::UsageError;
use crate::manifest::RunRecord;

/// Per interval: exported training sequences, one long diagnostic trajectory
/// and its autocorrelation table; plus a lag-1 summary across intervals.
pub fn run(ctx: &Ctx, args: &GenerateArgs) -> anyhow::Result<RunRecord> {
    let file = ctx.file.generate;
    let intervals = match (&args.interval[..], file) {
        ([], Some(g)) => vec![g.interval],
        ([], None) => return Err(UsageError("--interval is required (or `generate.interval` in --config)".into()).into()),
        (list, _) => list.to_vec(),
    };
    let base = file.unwrap_or_default();
    let base = GenConfig {
        dt: args.dt.unwrap_or(base.dt),
        warmup_steps: args.warmup_steps.unwrap_or(base.warmup_steps),
        context_len: args.context_len.or(file.map(|g| g.context_len)).unwrap_or(512),
        interval: 1,
        seed: ctx.seed,
    };
    base.validate().map_err(|e| UsageError(e.to_string()))?;
    if intervals.contains(&0) {
        return Err(UsageError("intervals must be positive".into()).into());
    }
    if args.samples <= args.max_lag + 1 {
        return Err(UsageError("--samples must exceed --max-lag + 1".into()).into());
    }
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for &interval in &intervals {
        let dir = ctx.out_dir.join(format!("interval_{interval}"));
        std::fs::create_dir_all(&dir)?;

        let gen = GenConfig { interval, ..base };
        let mut rows = Vec::new();
        for i in 0..args.sequences as u64 {
            let seq = generate_sequence(&GenConfig { seed: derive_seed(ctx.seed, i), ..gen })
                .with_context(|| format!("sequence {i} at interval {interval}"))?;
            let p = seq.params;
            for (t, (x, y)) in seq.inputs.iter().zip(&seq.targets).enumerate() {
                let mut row = vec![i.to_string(), t.to_string()];
                row.extend(x.iter().chain(y).map(f64::to_string));
                row.extend([p.sigma, p.rho, p.beta].map(|v| v.to_string()));
                rows.push(row);
            }
        }
        let path = dir.join("sequences.csv");
        let header = ["sequence", "position", "x", "y", "z", "target_x", "target_y", "target_z", "sigma", "rho", "beta"];
        write_csv(&path, &header, rows)?;
        outputs.push(path);

        // same parameters for every interval so the tables are comparable
        let diag = generate_sequence(&GenConfig { seed: ctx.seed, context_len: args.samples, ..gen })?;
        let path = dir.join("attractor.csv");
        export_attractor(&diag.inputs, &path)?;
        outputs.push(path);

        let cols: Vec<Vec<f64>> = (0..3).map(|k| diag.inputs.iter().map(|p| p[k]).collect()).collect();
        let mut acf_rows = Vec::new();
        for lag in 1..=args.max_lag {
            let mut row = vec![lag.to_string()];
            for c in &cols {
                row.push(autocorrelation(c, lag)?.to_string());
            }
            acf_rows.push(row);
        }
        summary.push([interval.to_string()].into_iter().chain(acf_rows[0][1..].iter().cloned()).collect::<Vec<_>>());
        let path = dir.join("autocorrelation.csv");
        write_csv(&path, &["lag", "x", "y", "z"], acf_rows)?;
        outputs.push(path);
    }
    let path = ctx.out_dir.join("autocorrelation_summary.csv");
    write_csv(&path, &["interval", "lag1_x", "lag1_y", "lag1_z"], summary)?;
    outputs.push(path);

    let config = serde_json::json!({
        "intervals": intervals,
        "sequences": args.sequences,
        "samples": args.samples,
        "max_lag": args.max_lag,
        "generator": base,
    });
    Ok(RunRecord { config, inputs: vec![], outputs })
}
