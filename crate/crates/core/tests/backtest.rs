use chaoscast::backtest::*;
use chaoscast::market::*;
use chaoscast::model::{init_model, Forecaster, ModelConfig, Persistence};
use chaoscast::Error;
use proptest::prelude::*;

fn unit_scaler() -> Scaler {
    Scaler {
        gain: [1.0; 3],
        offset: [0.0; 3],
        calibration_range: (0, 0),
        calibration_bars: 0,
        reference_interval: 100,
        reference: Moments { mean: [0.0; 3], std: [1.0; 3] },
    }
}

fn bars_with_y(ys: &[f64]) -> Vec<Bar> {
    ys.iter().enumerate().map(|(i, &y)| Bar { t_open: i as i64 * 5000, x: (i as f64).sin(), y, z: 2.0 }).collect()
}

fn series(pred: Vec<f64>, realized: Vec<f64>) -> PredictionSeries {
    PredictionSeries { t_pred: (0..pred.len() as i64).collect(), pred_y: pred, realized_y: realized }
}

#[test]
fn baseline_uses_last_context_y() {
    let mut ys = vec![0.0; 9];
    ys[7] = 0.004;
    let w = WindowSet::new(&bars_with_y(&ys), &unit_scaler(), 8).unwrap();
    assert_eq!(w.len(), 1);
    assert_eq!(baseline_series(&w).pred_y, [0.004]);

    let w = WindowSet::new(&bars_with_y(&[0.25; 40]), &unit_scaler(), 8).unwrap();
    assert!(baseline_series(&w).pred_y.iter().all(|&p| p == 0.25));
}

#[test]
fn baseline_equals_persistence_stub_bit_exactly() {
    let bars = synthetic_market(400, 100, 0.5, 5, 3).unwrap();
    let scaler = fit_scaler(&bars[..100], &Moments { mean: [0.0, 0.0, 23.0], std: [8.0, 9.0, 8.0] }, 100).unwrap();
    let w = build_test_windows(&bars, &scaler, 100, 64).unwrap();
    let stub = predict_series(&Persistence { context_len: 64 }, &w).unwrap();
    let base = baseline_series(&w);
    assert_eq!(stub, base);
    assert_eq!(stub.pred_y.len(), w.len());
    assert_eq!(stub.t_pred, (0..w.len()).map(|i| w.t_pred(i)).collect::<Vec<_>>());
}

#[test]
fn model_predictions_are_deterministic_and_aligned() {
    let cfg = ModelConfig::new(1, 8, 2).with_context_len(32);
    let model = init_model(&cfg, 4).unwrap();
    let bars = synthetic_market(120, 100, 0.5, 10, 8).unwrap();
    let scaler = fit_scaler(&bars[..40], &Moments { mean: [0.0, 0.0, 23.0], std: [8.0, 9.0, 8.0] }, 100).unwrap();
    let w = build_test_windows(&bars, &scaler, 40, 32).unwrap();
    let a = predict_series(&model, &w).unwrap();
    let b = predict_series(&model, &w).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.pred_y.len(), 48);
    assert_eq!(a.t_pred[0], bars[72].t_open);
    let wrong = init_model(&ModelConfig::new(1, 8, 2).with_context_len(16), 4).unwrap();
    assert!(matches!(predict_series(&wrong, &w), Err(Error::ShapeMismatch(_))));
}

#[test]
fn quiet_predictions_never_trade() {
    let s = series(vec![0.1, -0.2, 0.3], vec![0.5, 0.5, 0.5]);
    let r = run_strategy(&s, (-1.0, 1.0)).unwrap();
    assert_eq!((r.total_return, r.n_trades), (0.0, 0));
    assert_eq!(r.balance_curve, [0.0; 3]);
    assert!(run_strategy(&s, (1.0, -1.0)).is_err());
}

proptest! {
    #[test]
    fn raising_hi_quantile_never_lowers_hi(values in prop::collection::vec(-1e3f64..1e3, 20..200), q1 in 0.5f64..0.99, dq in 0.0f64..0.5) {
        let q2 = (q1 + dq).min(0.995);
        let (_, h1) = percentile_thresholds(&values, 0.01, q1).unwrap();
        let (_, h2) = percentile_thresholds(&values, 0.01, q2).unwrap();
        prop_assert!(h2 >= h1);
    }

    #[test]
    fn negation_flips_the_sign(pred in prop::collection::vec(-5.0f64..5.0, 1..100), lo in -3.0f64..0.0, hi in 0.0f64..3.0) {
        let realized: Vec<f64> = (0..pred.len()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.01).collect();
        let a = run_strategy(&series(pred.clone(), realized.clone()), (lo, hi)).unwrap();
        let b = run_strategy(&series(pred.iter().map(|p| -p).collect(), realized), (-hi, -lo)).unwrap();
        prop_assert_eq!(a.total_return, -b.total_return);
        prop_assert_eq!(a.n_trades, b.n_trades);
    }

    #[test]
    fn balance_curve_ends_at_total(pred in prop::collection::vec(-5.0f64..5.0, 1..100), realized_seed in 0u64..1000) {
        let realized: Vec<f64> = (0..pred.len()).map(|i| (((i as u64 + realized_seed) * 2_654_435_761 % 1000) as f64 - 500.0) * 1e-5).collect();
        let r = run_strategy(&series(pred, realized), (-1.0, 1.0)).unwrap();
        prop_assert!((r.balance_curve.last().unwrap() - r.total_return).abs() <= 1e-12);
    }

    #[test]
    fn widening_quantiles_never_adds_trades(values in prop::collection::vec(-1.0f64..1.0, 40..200), widen in 0.0f64..0.04) {
        let s = series(values.clone(), vec![0.01; values.len()]);
        let cfg_narrow = StrategyConfig { short_quantile: 0.05, long_quantile: 0.95 };
        let cfg_wide = StrategyConfig { short_quantile: 0.05 - widen, long_quantile: 0.95 + widen };
        let narrow = backtest_series(&s, &s, &cfg_narrow).unwrap();
        let wide = backtest_series(&s, &s, &cfg_wide).unwrap();
        prop_assert!(wide.n_trades <= narrow.n_trades);
    }
}

fn grid_markets() -> Vec<MarketSeries> {
    DEFAULT_TIMEFRAMES
        .iter()
        .map(|&tf| MarketSeries { timeframe_s: tf, bars: synthetic_market(200, 100, 0.5, tf, tf).unwrap() })
        .collect()
}

fn grid_cfg() -> GridConfig {
    GridConfig { calibration_bars: 60, context_len: 32, strategy: StrategyConfig::default() }
}

#[test]
fn full_grid_shape_and_identities() {
    let reference = Moments { mean: [0.0, 0.0, 23.0], std: [8.0, 9.0, 8.0] };
    let model = init_model(&ModelConfig::new(1, 8, 2).with_context_len(32), 1).unwrap();
    let persistence = Persistence { context_len: 32 };
    let horizons: Vec<HorizonModel> = [100, 300, 500, 700, 1000]
        .iter()
        .enumerate()
        .map(|(i, &h)| HorizonModel {
            horizon: h,
            model: Some(if i == 0 { &persistence as &dyn Forecaster } else { &model }),
            reference,
        })
        .collect();
    let report = grid_report(&grid_markets(), &horizons, &grid_cfg());
    assert_eq!(report.cells.len(), 35);
    assert_eq!(report.baselines.len(), 7);
    for cell in &report.cells {
        let c = cell.outcome.as_ref().unwrap();
        assert_eq!(c.excess_return, c.model_return - c.baseline_return);
        if cell.horizon == 100 {
            assert_eq!(c.excess_return, 0.0);
        }
    }
    let marks = row_marks(&report);
    for tf in DEFAULT_TIMEFRAMES {
        let row: Vec<u8> = report.cells.iter().zip(&marks).filter(|(c, _)| c.timeframe_s == tf).map(|(_, &m)| m).collect();
        assert_eq!(row.iter().filter(|&&m| m == 1).count(), 1);
        assert_eq!(row.iter().filter(|&&m| m == 2).count(), 1);
    }

    let dir = tempfile::tempdir().unwrap();
    let written = write_report(&report, &dir.path().join("a")).unwrap();
    assert_eq!(written.len(), 1 + 35 + 7);
    let again = grid_report(&grid_markets(), &horizons, &grid_cfg());
    write_report(&again, &dir.path().join("b")).unwrap();
    for p in &written {
        let name = p.file_name().unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(dir.path().join("b").join(name)).unwrap());
    }
    let csv = std::fs::read_to_string(dir.path().join("a/report.csv")).unwrap();
    assert!(csv.starts_with("timeframe_s,horizon,model_return,baseline_return,excess_return,n_trades"));
}

#[test]
fn failing_cells_do_not_stop_the_grid() {
    let reference = Moments { mean: [0.0, 0.0, 23.0], std: [8.0, 9.0, 8.0] };
    let persistence = Persistence { context_len: 32 };
    let horizons = [
        HorizonModel { horizon: 100, model: Some(&persistence as &dyn Forecaster), reference },
        HorizonModel { horizon: 300, model: None, reference },
    ];
    let mut markets = grid_markets();
    markets.truncate(2);
    markets[1].bars.truncate(80);
    let report = grid_report(&markets, &horizons, &grid_cfg());
    assert_eq!(report.cells.len(), 4);
    assert!(report.cells[0].outcome.is_ok());
    assert!(report.cells[1].outcome.as_ref().unwrap_err().contains("horizon 300"));
    assert!(report.cells[2].outcome.is_err());
    assert!(report.cells[3].outcome.is_err());
    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
