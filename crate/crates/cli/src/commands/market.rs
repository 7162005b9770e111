use std::path::PathBuf;

use anyhow::Context;
use chaoscast::backtest::{grid_report, write_report, HorizonModel, MarketSeries};
use chaoscast::chaos::derive_seed;
use chaoscast::market::{aggregate_bars, fit_scaler, parse_trades, read_bars, reference_moments, synthetic_market, write_bars};
use chaoscast::model::{load_checkpoint, Forecaster, ModelParams};

use super::{files_under, Ctx};
use crate::cli::{BacktestArgs, IngestArgs};
use crate::config::{horizon_pair, UsageError};
use crate::manifest::RunRecord;

fn bars_name(tf: u64) -> String {
    format!("bars_{tf}s.csv")
}

pub fn ingest(ctx: &Ctx, args: &IngestArgs) -> anyhow::Result<RunRecord> {
    if args.timeframes.is_empty() || args.timeframes.contains(&0) {
        return Err(UsageError("timeframes must be positive".into()).into());
    }
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut skipped = None;
    let trades = match &args.trades {
        Some(path) => {
            let parsed = parse_trades(path)?;
            inputs.push(path.clone());
            println!("{} trades, {} malformed rows skipped", parsed.trades.len(), parsed.skipped);
            skipped = Some(parsed.skipped);
            Some(parsed.trades)
        }
        None => None,
    };
    for &tf in &args.timeframes {
        let bars = match (&trades, args.synthetic) {
            (Some(t), _) => aggregate_bars(t, tf)?,
            (None, Some(n)) => synthetic_market(n as usize, args.synthetic_interval, args.noise_ratio, tf, derive_seed(ctx.seed, tf))?,
            (None, None) => unreachable!("clap requires --trades or --synthetic"),
        };
        let path = ctx.out_dir.join(bars_name(tf));
        write_bars(&bars, &path)?;
        println!("{tf}s: {} bars", bars.len());
        outputs.push(path);
    }
    let config = serde_json::json!({
        "trades": args.trades,
        "skipped_rows": skipped,
        "synthetic_bars": args.synthetic,
        "noise_ratio": args.synthetic.map(|_| args.noise_ratio),
        "synthetic_interval": args.synthetic.map(|_| args.synthetic_interval),
        "timeframes": args.timeframes,
    });
    Ok(RunRecord { config, inputs, outputs })
}

pub fn backtest(ctx: &Ctx, args: &BacktestArgs) -> anyhow::Result<RunRecord> {
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut grid = ctx.file.grid.unwrap_or_default();
    if let Some(c) = args.calibration_bars {
        grid.calibration_bars = c;
    }

    let pairs = args.checkpoints.iter().map(|s| horizon_pair(s)).collect::<Result<Vec<_>, _>>()?;
    for (h, _) in &pairs {
        if !args.horizons.contains(h) {
            return Err(UsageError(format!("checkpoint given for horizon {h}, which is not in --horizons")).into());
        }
    }
    let mut models: Vec<(u32, Option<ModelParams>)> = Vec::new();
    for &h in &args.horizons {
        let model = match pairs.iter().find(|(ph, _)| *ph == h) {
            Some((_, dir)) => {
                let params = load_checkpoint(dir, None).with_context(|| format!("checkpoint for horizon {h}"))?.params;
                inputs.extend(files_under(dir)?);
                Some(params)
            }
            None => None,
        };
        models.push((h, model));
    }
    let contexts: Vec<usize> = models.iter().filter_map(|(_, m)| m.as_ref().map(|p| p.config().context_len)).collect();
    if let Some(&c) = contexts.first() {
        if contexts.iter().any(|&x| x != c) {
            return Err(UsageError("all checkpoints must share one context length".into()).into());
        }
        grid.context_len = c;
    }

    let mut references = Vec::new();
    for &(h, _) in &models {
        references.push(reference_moments(h, args.reference_sequences, ctx.seed)?);
    }
    let horizons: Vec<HorizonModel> = models
        .iter()
        .zip(&references)
        .map(|((h, m), r)| HorizonModel { horizon: *h, model: m.as_ref().map(|p| p as &dyn Forecaster), reference: *r })
        .collect();

    let bars_dir: PathBuf = args.bars_dir.clone().unwrap_or_else(|| ctx.out_dir.clone());
    let mut markets = Vec::new();
    for &tf in &args.timeframes {
        let path = bars_dir.join(bars_name(tf));
        let bars = read_bars(&path)?;
        inputs.push(path);
        markets.push(MarketSeries { timeframe_s: tf, bars });
    }

    // scalers are persisted for inspection; the grid refits them identically
    for m in &markets {
        for h in &horizons {
            if let Some(calib) = m.bars.get(..grid.calibration_bars) {
                if let Ok(s) = fit_scaler(calib, &h.reference, h.horizon) {
                    let path = ctx.out_dir.join(format!("scaler_tf{}_h{}.json", m.timeframe_s, h.horizon));
                    std::fs::write(&path, serde_json::to_string_pretty(&s)? + "\n")?;
                    outputs.push(path);
                }
            }
        }
    }

    let report = grid_report(&markets, &horizons, &grid);
    outputs.extend(write_report(&report, &ctx.out_dir)?);
    let failed = report.cells.iter().filter(|c| c.outcome.is_err()).count();
    for c in &report.cells {
        match &c.outcome {
            Ok(r) => println!("{:>4}s h{:<5} model {:+.6} baseline {:+.6} excess {:+.6} trades {}", c.timeframe_s, c.horizon, r.model_return, r.baseline_return, r.excess_return, r.n_trades),
            Err(e) => println!("{:>4}s h{:<5} failed: {e}", c.timeframe_s, c.horizon),
        }
    }
    let config = serde_json::json!({
        "grid": grid,
        "timeframes": args.timeframes,
        "horizons": args.horizons,
        "checkpoints": pairs,
        "reference_sequences": args.reference_sequences,
        "bars_dir": bars_dir,
    });
    if failed == report.cells.len() {
        return Err(chaoscast::Error::InsufficientData(format!("all {failed} grid cells failed; see report.csv")).into());
    }
    Ok(RunRecord { config, inputs, outputs })
}
