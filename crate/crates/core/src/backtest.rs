//! Zero-shot one-step prediction over market windows, the quantile
//! long/short strategy, the persistence baseline and the
//! (timeframe × horizon) excess-return grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{fit_scaler, Bar, Moments, WindowSet};
use crate::model::{Forecaster, Persistence};

/// Minimum calibration predictions needed to place the thresholds.
pub const MIN_CALIBRATION: usize = 20;

const PREDICT_CHUNK: usize = 16;

/// Predicted (scaled) and realized (unscaled) next-bar returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub t_pred: Vec<i64>,
    pub pred_y: Vec<f64>,
    pub realized_y: Vec<f64>,
}

/// Forecast the `y` dimension at the last context position of every window.
pub fn predict_series(model: &dyn Forecaster, windows: &WindowSet) -> Result<PredictionSeries> {
    let t = windows.context_len();
    if model.context_len() != t {
        return Err(Error::ShapeMismatch(format!(
            "model context {} does not match window length {t}",
            model.context_len()
        )));
    }
    let n = windows.len();
    let mut pred_y = Vec::with_capacity(n);
    for start in (0..n).step_by(PREDICT_CHUNK) {
        let out = model.forecast(windows.batch(start..(start + PREDICT_CHUNK).min(n)).view())?;
        pred_y.extend(out.outer_iter().map(|row| row[[t - 1, 1]]));
    }
    Ok(PredictionSeries {
        t_pred: (0..n).map(|i| windows.t_pred(i)).collect(),
        pred_y,
        realized_y: (0..n).map(|i| windows.realized_next_y(i)).collect(),
    })
}

/// The autocorrelation baseline: the last context value of `y` is the forecast.
pub fn baseline_series(windows: &WindowSet) -> PredictionSeries {
    let n = windows.len();
    let t = windows.context_len();
    PredictionSeries {
        t_pred: (0..n).map(|i| windows.t_pred(i)).collect(),
        pred_y: (0..n).map(|i| windows.inputs(i)[t - 1][1]).collect(),
        realized_y: (0..n).map(|i| windows.realized_next_y(i)).collect(),
    }
}

/// Nearest-rank quantiles `(lo, hi)` of `values`.
pub fn percentile_thresholds(values: &[f64], lo_q: f64, hi_q: f64) -> Result<(f64, f64)> {
    if values.len() < MIN_CALIBRATION {
        return Err(Error::InsufficientCalibration { needed: MIN_CALIBRATION, got: values.len() });
    }
    if !(0.0 < lo_q && lo_q < hi_q && hi_q < 1.0) {
        return Err(Error::InvalidConfig(format!("quantiles must satisfy 0 < {lo_q} < {hi_q} < 1")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivation("calibration predictions"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // tolerance keeps q·n that should be an integer from rounding up
    let rank = |q: f64| ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok((sorted[rank(lo_q) - 1], sorted[rank(hi_q) - 1]))
}

/// Outcome of trading one prediction series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub total_return: f64,
    /// Cumulative return after each step.
    pub balance_curve: Vec<f64>,
    pub n_trades: usize,
}

/// Long one unit when the prediction reaches `hi`, short when it reaches
/// `lo`, flat otherwise; each position earns the realized next-bar return.
/// With `lo == hi` a prediction equal to both stays flat.
pub fn run_strategy(series: &PredictionSeries, thresholds: (f64, f64)) -> Result<StrategyResult> {
    let (lo, hi) = thresholds;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidConfig(format!("thresholds must be finite with lo <= hi, got ({lo}, {hi})")));
    }
    if series.pred_y.len() != series.realized_y.len() {
        return Err(Error::ShapeMismatch("predictions and realized returns differ in length".into()));
    }
    let mut total = 0.0;
    let mut n_trades = 0;
    let mut curve = Vec::with_capacity(series.pred_y.len());
    for (&p, &r) in series.pred_y.iter().zip(&series.realized_y) {
        let position = match (p >= hi, p <= lo) {
            (true, false) => 1.0,
            (false, true) => -1.0,
            _ => 0.0,
        };
        if position != 0.0 {
            n_trades += 1;
            total += position * r;
        }
        curve.push(total);
    }
    Ok(StrategyResult { total_return: total, balance_curve: curve, n_trades })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub short_quantile: f64,
    pub long_quantile: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self { short_quantile: 0.05, long_quantile: 0.95 }
    }
}

/// Thresholds from the calibration series, then trade the test series.
pub fn backtest_series(calibration: &PredictionSeries, test: &PredictionSeries, cfg: &StrategyConfig) -> Result<StrategyResult> {
    let th = percentile_thresholds(&calibration.pred_y, cfg.short_quantile, cfg.long_quantile)?;
    run_strategy(test, th)
}

/// Bars of one timeframe.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub timeframe_s: u64,
    pub bars: Vec<Bar>,
}

/// A pretrained model for one horizon and the training moments its inputs are scaled to.
#[derive(Clone, Copy)]
pub struct HorizonModel<'a> {
    pub horizon: u32,
    pub model: Option<&'a dyn Forecaster>,
    pub reference: Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub calibration_bars: usize,
    pub context_len: usize,
    pub strategy: StrategyConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { calibration_bars: crate::market::DEFAULT_CALIBRATION_BARS, context_len: 512, strategy: StrategyConfig::default() }
    }
}

/// Returns of one trading run and its balance curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRun {
    pub result: StrategyResult,
    pub t_pred: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReturns {
    pub model: TradeRun,
    pub model_return: f64,
    pub baseline_return: f64,
    pub excess_return: f64,
    pub n_trades: usize,
}

/// One (timeframe, horizon) cell; failures are kept as messages so the rest
/// of the grid still reports.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub timeframe_s: u64,
    pub horizon: u32,
    pub outcome: std::result::Result<CellReturns, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub timeframe_s: u64,
    pub outcome: std::result::Result<TradeRun, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub cells: Vec<GridCell>,
    pub baselines: Vec<BaselineRow>,
}

/// Split bars into calibration and test windows scaled to `reference`.
fn windows_for(bars: &[Bar], reference: &Moments, horizon: u32, cfg: &GridConfig) -> Result<(WindowSet, WindowSet)> {
    let calib = bars.get(..cfg.calibration_bars).ok_or_else(|| {
        Error::InsufficientData(format!("{} bars do not cover a {}-bar calibration prefix", bars.len(), cfg.calibration_bars))
    })?;
    let scaler = fit_scaler(calib, reference, horizon)?;
    let calib_windows = WindowSet::new(calib, &scaler, cfg.context_len)?;
    let test_windows = WindowSet::new(&bars[cfg.calibration_bars..], &scaler, cfg.context_len)?;
    Ok((calib_windows, test_windows))
}

fn trade(model: &dyn Forecaster, calib: &WindowSet, test: &WindowSet, cfg: &StrategyConfig) -> Result<TradeRun> {
    let c = predict_series(model, calib)?;
    let t = predict_series(model, test)?;
    Ok(TradeRun { result: backtest_series(&c, &t, cfg)?, t_pred: t.t_pred })
}

/// Evaluate every (timeframe × horizon) cell. The baseline of a timeframe
/// does not depend on the horizon: its positions are invariant under the
/// positive-gain scaling.
pub fn grid_report(markets: &[MarketSeries], horizons: &[HorizonModel<'_>], cfg: &GridConfig) -> BacktestReport {
    let persistence = Persistence { context_len: cfg.context_len };
    let mut cells = Vec::new();
    let mut baselines = Vec::new();
    for m in markets {
        let base = horizons
            .first()
            .ok_or_else(|| Error::InvalidConfig("no horizons requested".into()))
            .and_then(|h| windows_for(&m.bars, &h.reference, h.horizon, cfg))
            .and_then(|(c, t)| trade(&persistence, &c, &t, &cfg.strategy));
        let base = base.map_err(|e| e.to_string());
        for h in horizons {
            let outcome = (|| {
                let base = base.as_ref().map_err(|e| Error::InsufficientData(format!("baseline failed: {e}")))?;
                let model = h.model.ok_or(Error::MissingCheckpoint(h.horizon))?;
                let (c, t) = windows_for(&m.bars, &h.reference, h.horizon, cfg)?;
                let run = trade(model, &c, &t, &cfg.strategy)?;
                let model_return = run.result.total_return;
                let baseline_return = base.result.total_return;
                Ok::<_, Error>(CellReturns {
                    n_trades: run.result.n_trades,
                    model: run,
                    model_return,
                    baseline_return,
                    excess_return: model_return - baseline_return,
                })
            })()
            .map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("cell {}s × {}: {e}", m.timeframe_s, h.horizon);
            }
            cells.push(GridCell { timeframe_s: m.timeframe_s, horizon: h.horizon, outcome });
        }
        baselines.push(BaselineRow { timeframe_s: m.timeframe_s, outcome: base });
    }
    BacktestReport { cells, baselines }
}

/// Rank of each cell's excess return within its timeframe row: 1 for the
/// best, 2 for the second best, 0 otherwise. Ties go to the earlier horizon.
pub fn row_marks(report: &BacktestReport) -> Vec<u8> {
    let mut marks = vec![0u8; report.cells.len()];
    for row in &report.baselines {
        let mut idx: Vec<usize> = (0..report.cells.len())
            .filter(|&i| report.cells[i].timeframe_s == row.timeframe_s && report.cells[i].outcome.is_ok())
            .collect();
        let excess = |i: usize| report.cells[i].outcome.as_ref().map_or(f64::NEG_INFINITY, |c| c.excess_return);
        idx.sort_by(|&a, &b| excess(b).total_cmp(&excess(a)));
        for (rank, &i) in idx.iter().take(2).enumerate() {
            marks[i] = rank as u8 + 1;
        }
    }
    marks
}

fn write_curve(path: &Path, run: &TradeRun) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_pred", "cumulative_return"])?;
    for (t, v) in run.t_pred.iter().zip(&run.result.balance_curve) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn balance_curve_name(timeframe_s: u64, horizon: Option<u32>) -> String {
    match horizon {
        Some(h) => format!("balance_tf{timeframe_s}_h{h}.csv"),
        None => format!("balance_tf{timeframe_s}_baseline.csv"),
    }
}

/// Write `report.csv` (one row per cell; failed cells leave the numbers
/// empty and carry the error) plus one balance-curve CSV per successful
/// cell and baseline. Returns every path written.
pub fn write_report(report: &BacktestReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let marks = row_marks(report);
    let path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["timeframe_s", "horizon", "model_return", "baseline_return", "excess_return", "n_trades", "mark", "error"])?;
    let mut written = vec![path];
    for (cell, mark) in report.cells.iter().zip(marks) {
        let (tf, h) = (cell.timeframe_s.to_string(), cell.horizon.to_string());
        match &cell.outcome {
            Ok(c) => {
                let mark = ["", "best", "second"][mark as usize];
                w.write_record([
                    tf,
                    h,
                    c.model_return.to_string(),
                    c.baseline_return.to_string(),
                    c.excess_return.to_string(),
                    c.n_trades.to_string(),
                    mark.into(),
                    String::new(),
                ])?;
                let p = dir.join(balance_curve_name(cell.timeframe_s, Some(cell.horizon)));
                write_curve(&p, &c.model)?;
                written.push(p);
            }
            Err(e) => w.write_record([tf, h, String::new(), String::new(), String::new(), String::new(), String::new(), e.clone()])?,
        }
    }
    w.flush()?;
    for row in &report.baselines {
        if let Ok(run) = &row.outcome {
            let p = dir.join(balance_curve_name(row.timeframe_s, None));
            write_curve(&p, run)?;
            written.push(p);
        }
    }
    Ok(written)
}
