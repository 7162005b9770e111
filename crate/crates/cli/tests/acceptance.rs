//! Acceptance checks, one line per criterion. Runs as a plain binary
//! (`harness = false`) so the report reads top to bottom; exits nonzero if
//! any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use chaoscast::backtest::{baseline_series, grid_report, predict_series, run_strategy, GridConfig, HorizonModel, MarketSeries, PredictionSeries};
use chaoscast::chaos::{autocorrelation, resampled_trajectory, rk4_step, sample_params, GenConfig, LorenzIntegrator, LorenzParams, LorenzState};
use chaoscast::market::{build_test_windows, fit_scaler, reference_moments, synthetic_market};
use chaoscast::metrics::{fit_scaling_law, samples_to_threshold, IcCurve, ScalingPoint};
use chaoscast::model::{forward, grad, init_model, mse_loss, param_count, Batch, ModelConfig, ModelParams, Persistence, PositionalEncoding};
use chaoscast::train::{train, TrainConfig, TrainOptions};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal_array(rng: &mut ChaCha8Rng, shape: (usize, usize, usize), scale: f64) -> Array3<f64> {
    Array3::from_shape_simple_fn(shape, || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Parameter group of a tensor: its name with the layer index removed.
fn group_of(name: &str) -> String {
    match name.strip_prefix("layers.") {
        Some(rest) => rest.split_once('.').map_or(rest, |(_, t)| t).to_string(),
        None => name.to_string(),
    }
}

fn gradient_exactness() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::new(2, 16, 2).with_context_len(32).with_positional(PositionalEncoding::Learned);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = init_model(&cfg, 1).map_err(|e| e.to_string())?;
    // move norms and biases off their initial values so every term is exercised
    for v in p.data.iter_mut() {
        *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    let batch = Batch::new(normal_array(&mut rng, (2, 32, 3), 1.0), normal_array(&mut rng, (2, 32, 3), 1.0))
        .map_err(|e| e.to_string())?;
    let (_, g) = grad(&p, &batch).map_err(|e| e.to_string())?;
    let loss_at = |q: &ModelParams| mse_loss(forward(q, batch.inputs.view()).unwrap().view(), batch.targets.view()).unwrap();

    let h = 1e-4;
    let floor = 1e-6;
    let mut q = p.clone();
    let mut per_group: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for t in &p.layout().tensors {
        let n: usize = t.shape.iter().product();
        let entry = per_group.entry(group_of(&t.name)).or_insert((0, 0.0));
        // every coordinate is checked, which covers the sampling requirement
        for i in t.offset..t.offset + n {
            let orig = q.data[i];
            q.data[i] = orig + h;
            let up = loss_at(&q);
            q.data[i] = orig - h;
            let down = loss_at(&q);
            q.data[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - g.data[i]).abs() / fd.abs().max(g.data[i].abs()).max(floor);
            entry.0 += 1;
            entry.1 = entry.1.max(rel);
        }
    }
    let worst = per_group.values().map(|v| v.1).fold(0.0, f64::max);
    let fewest = per_group.values().map(|v| v.0).min().unwrap_or(0);
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-4 && secs < 60.0,
        format!("{} groups, {} coordinates, fewest per group {fewest}, worst relative error {worst:.2e}", per_group.len(), p.len()),
    )
}

fn causality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut details = Vec::new();
    let mut ok = true;
    for preset in ["0.1M", "1M", "10M"] {
        let cfg = ModelConfig::preset(preset).map_err(|e| e.to_string())?;
        let p = init_model(&cfg, 2).map_err(|e| e.to_string())?;
        let x = normal_array(&mut rng, (1, cfg.context_len, 3), 10.0);
        let base = forward(&p, x.view()).map_err(|e| e.to_string())?;
        let mut changed = 0;
        for _ in 0..20 {
            let t = rng.random_range(1..cfg.context_len);
            let dim = rng.random_range(0..3);
            let delta: f64 = rng.random_range(-20.0..20.0);
            let mut y = x.clone();
            y[[0, t, dim]] += delta;
            let out = forward(&p, y.view()).map_err(|e| e.to_string())?;
            for i in 0..t {
                for k in 0..3 {
                    ok &= base[[0, i, k]].to_bits() == out[[0, i, k]].to_bits();
                }
            }
            changed += usize::from((0..3).any(|k| base[[0, t, k]] != out[[0, t, k]]));
        }
        details.push(format!("{preset}: 20 pairs, {changed} changed at t"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(ok && secs < 60.0, format!("{}; {secs:.1}s of the 60s budget", details.join("; ")))
}

fn parameter_counts() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (preset, target) in [("0.1M", 1e5), ("1M", 1e6), ("10M", 1e7)] {
        let n = param_count(&ModelConfig::preset(preset).map_err(|e| e.to_string())?);
        let dev = n as f64 / target - 1.0;
        ok &= dev.abs() <= 0.15;
        details.push(format!("{preset} {n} ({:+.1}%)", 100.0 * dev));
    }
    ensure(ok, details.join(", "))
}

fn dist(a: LorenzState, b: LorenzState) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

fn integrator_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dt = 0.01;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let (p, s0) = sample_params(&mut rng);
        let mut it = LorenzIntegrator::new(s0, p, dt);
        it.advance(rng.random_range(500..3000));
        let s = it.state;
        let exact = (0..1000).fold(s, |s, _| rk4_step(s, p, dt / 1000.0));
        let coarse = dist(rk4_step(s, p, dt), exact);
        let fine = dist(rk4_step(rk4_step(s, p, dt / 2.0), p, dt / 2.0), exact);
        let r = coarse / fine;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    ensure((12.0..=20.0).contains(&lo) && (12.0..=20.0).contains(&hi), format!("100 states, ratio in [{lo:.2}, {hi:.2}]"))
}

fn trajectory_soundness() -> Outcome {
    let (mut ax, mut ay, mut zmin, mut zmax) = (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    let mut ok = true;
    for seed in 1000..1100u64 {
        let (p, mut s): (LorenzParams, LorenzState) = sample_params(&mut ChaCha8Rng::seed_from_u64(seed));
        for _ in 0..1_000_000 {
            s = rk4_step(s, p, 0.01);
            ax = ax.max(s.x.abs());
            ay = ay.max(s.y.abs());
            zmin = zmin.min(s.z);
            zmax = zmax.max(s.z);
        }
        ok &= s.is_finite();
    }
    ok &= ax <= 30.0 && ay <= 40.0 && zmin >= -1.0 && zmax <= 60.0;
    ensure(ok, format!("100 × 1e6 steps: max|x| {ax:.2}, max|y| {ay:.2}, z in [{zmin:.3}, {zmax:.2}]"))
}

fn resampling_diagnostics() -> Outcome {
    let (p, init) = sample_params(&mut ChaCha8Rng::seed_from_u64(6));
    let lag1 = |interval: u32| -> Result<f64, String> {
        let cfg = GenConfig { interval, ..GenConfig::default() };
        let pts = resampled_trajectory(p, init, &cfg, 10_000).map_err(|e| e.to_string())?;
        let xs: Vec<f64> = pts.iter().map(|v| v[0]).collect();
        autocorrelation(&xs, 1).map_err(|e| e.to_string())
    };
    let (a1, a1000) = (lag1(1)?, lag1(1000)?);
    ensure(a1 > 0.99 && a1000 < 0.3, format!("lag-1 autocorrelation of x: {a1:.4} at interval 1, {a1000:.4} at interval 1000"))
}

/// The desk-scale pretraining run; its model is reused by the backtest check.
fn learnability(trained: &mut Option<ModelParams>) -> Outcome {
    let cfg = TrainConfig {
        total_samples: 1_000_000,
        batch_size: 4,
        base_lr: 1e-3,
        eval_every: 50,
        eval_sequences: 64,
        interval: 100,
        seed: 0,
        ..TrainConfig::default()
    };
    let out = train(&ModelConfig::small(), &cfg, &TrainOptions::default()).map_err(|e| e.to_string())?;
    let recs = &out.metrics.records;
    let curve = IcCurve::new(100, recs.iter().map(|r| (r.samples_seen, r.ic_y)).collect()).map_err(|e| e.to_string())?;
    let reached = samples_to_threshold(&curve, 0.1, 3);
    let (first, last) = (recs.first().unwrap(), recs.last().unwrap());
    let ratio = last.val_loss / first.val_loss;
    *trained = Some(out.params);
    ensure(
        reached.is_some_and(|n| n <= 10_000_000) && ratio < 0.5,
        format!(
            "{} samples: IC(y) {:.3} at end, 0.1 reached at {}, val loss {:.1} -> {:.1} ({:.1}% of step 0)",
            last.samples_seen,
            last.ic_y,
            reached.map_or("never".into(), |n| n.to_string()),
            first.val_loss,
            last.val_loss,
            100.0 * ratio
        ),
    )
}

fn scaling_harness() -> Outcome {
    // crossings at 10^(3 + h/100) samples, so log10 is exactly linear in h
    let horizons = [100u32, 300, 500, 700, 1000];
    let mut points = Vec::new();
    let (mut ramp_ok, mut step_ok) = (0, 0);
    for &h in &horizons {
        let e = 3 + h as i64 / 100;
        let crossing = 10u64.pow(e as u32);
        // quarter-decade grid; IC rises linearly in log10(samples) and is exactly 0.1 at the crossing
        let grid: Vec<(u64, f64)> = (0..=4 * e + 8)
            .map(|k| {
                let n = if k % 4 == 0 { 10u64.pow((k / 4) as u32) } else { 10f64.powf(k as f64 / 4.0).round() as u64 };
                (n, 0.1 + 0.05 * ((k - 4 * e) as f64 / 4.0))
            })
            .collect();
        let ramp = IcCurve::new(h, grid.clone()).map_err(|e| e.to_string())?;
        ramp_ok += usize::from(samples_to_threshold(&ramp, 0.1, 1) == Some(crossing));
        // a jump from 0 to 0.6 at the crossing lifts the 3-point mean straight to 0.2
        let step = IcCurve::new(h, grid.iter().map(|&(n, _)| (n, if n >= crossing { 0.6 } else { 0.0 })).collect())
            .map_err(|e| e.to_string())?;
        step_ok += usize::from(samples_to_threshold(&step, 0.1, 3) == Some(crossing));
        points.push(ScalingPoint { horizon: h, samples_to_threshold: crossing });
    }
    let fit = fit_scaling_law(&points).map_err(|e| e.to_string())?;
    let fit_ok = (fit.r2 - 1.0).abs() <= 1e-12 && (fit.slope - 0.01).abs() < 1e-12 && (fit.intercept - 3.0).abs() < 1e-9;
    let n = horizons.len();
    ensure(
        ramp_ok == n && step_ok == n && fit_ok,
        format!(
            "crossings recovered {ramp_ok}/{n} (log-linear ramp, window 1), {step_ok}/{n} (step, window 3); slope {:.6}, intercept {:.6}, r2 - 1 = {:.1e}",
            fit.slope,
            fit.intercept,
            fit.r2 - 1.0
        ),
    )
}

fn backtest_correctness(trained: Option<&ModelParams>) -> Outcome {
    let hand = PredictionSeries { t_pred: vec![1, 2, 3], pred_y: vec![10.0, 0.0, -10.0], realized_y: vec![0.01, 0.02, -0.03] };
    let r = run_strategy(&hand, (-5.0, 5.0)).map_err(|e| e.to_string())?;
    let hand_ok = r.total_return == 0.04 && r.n_trades == 2;

    let seed = 0;
    let bars = synthetic_market(2112, 100, 0.5, 5, seed).map_err(|e| e.to_string())?;
    let reference = reference_moments(100, 64, seed).map_err(|e| e.to_string())?;
    let scaler = fit_scaler(&bars[..600], &reference, 100).map_err(|e| e.to_string())?;
    let windows = build_test_windows(&bars, &scaler, 600, 512).map_err(|e| e.to_string())?;
    let stub = predict_series(&Persistence { context_len: 512 }, &windows).map_err(|e| e.to_string())?;
    let stub_ok = stub == baseline_series(&windows);

    let model = trained.ok_or("no trained model (learnability run failed)")?;
    let markets = [MarketSeries { timeframe_s: 5, bars }];
    let horizons = [HorizonModel { horizon: 100, model: Some(model), reference }];
    let cfg = GridConfig { calibration_bars: 600, context_len: 512, ..GridConfig::default() };
    let report = grid_report(&markets, &horizons, &cfg);
    let cell = report.cells[0].outcome.as_ref().map_err(|e| e.clone())?;
    ensure(
        hand_ok && stub_ok && cell.excess_return > 0.0,
        format!(
            "hand example {} with {} trades; baseline == persistence stub: {stub_ok}; synthetic market model {:+.2} baseline {:+.2} excess {:+.2} ({} trades)",
            r.total_return, r.n_trades, cell.model_return, cell.baseline_return, cell.excess_return, cell.n_trades
        ),
    )
}

const TINY: &str = r#"{"model": {"n_layers": 1, "d_model": 8, "n_heads": 2, "context_len": 32,
  "d_ff": 8, "in_dim": 3, "out_dim": 3, "positional": "sinusoidal"}}"#;

/// Every command once, under `root`.
fn pipeline(root: &Path, config: &Path) -> Result<(), String> {
    let run = |out: &str, args: &[&str]| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_chaoscast"))
            .args(["--workers", "1", "--seed", "5", "--config"])
            .arg(config)
            .arg("--out-dir")
            .arg(root.join(out))
            .args(args)
            .env("RUST_LOG", "error")
            .output()
            .map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))
        }
    };
    let p = |s: &str| root.join(s).display().to_string();
    run("gen", &["generate", "--interval", "1,100", "--samples", "2000", "--sequences", "2", "--context-len", "32"])?;
    run("train", &["train", "--total-samples", "2048", "--batch-size", "4", "--eval-every", "4", "--checkpoint-every", "8", "--eval-sequences", "8"])?;
    let ck = p("train/checkpoints/step_00000016");
    run("eval", &["eval", "--log", &format!("100={}", p("train/metrics.csv")), "--checkpoint", &ck, "--eval-sequences", "8"])?;
    run("mkt", &["ingest", "--synthetic", "400", "--timeframes", "5,10"])?;
    run("mkt", &["backtest", "--timeframes", "5,10", "--horizons", "100", "--checkpoint", &format!("100={ck}"), "--calibration-bars", "150", "--reference-sequences", "8"])?;
    run(".", &["report", "--from", &root.display().to_string()])
}

fn artifacts(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.file_name().unwrap().to_string_lossy().starts_with("manifest_") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("tiny.json");
    fs::write(&config, TINY).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a, &config)?;
    pipeline(&b, &config)?;
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    if fa != fb {
        return Err(format!("artifact sets differ: {} vs {} files", fa.len(), fb.len()));
    }
    let differing: Vec<String> = fa
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    let checkpoints = fa.iter().filter(|f| f.starts_with("train/checkpoints")).count();
    let csvs = fa.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).count();
    ensure(
        differing.is_empty() && checkpoints > 0,
        format!(
            "6 commands twice: {} artifacts ({csvs} CSV, {checkpoints} checkpoint files) byte-identical{}",
            fa.len(),
            if differing.is_empty() { String::new() } else { format!("; differing: {}", differing.join(", ")) }
        ),
    )
}

fn main() {
    let mut trained = None;
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failures += usize::from(outcome.is_err());
        println!("criterion {n:>2} {tag} {name} [{secs:.1}s]: {detail}");
    };
    report(1, "gradient exactness", &mut gradient_exactness);
    report(2, "causality", &mut causality);
    report(3, "parameter counts", &mut parameter_counts);
    report(4, "integrator order", &mut integrator_order);
    report(5, "trajectory soundness", &mut trajectory_soundness);
    report(6, "resampling diagnostics", &mut resampling_diagnostics);
    report(7, "desk-scale learnability", &mut || learnability(&mut trained));
    report(8, "scaling-law harness", &mut scaling_harness);
    report(9, "backtest correctness", &mut || backtest_correctness(trained.as_ref()));
    report(10, "reproducibility", &mut reproducibility);
    if failures > 0 {
        println!("{failures} of 10 criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
