use std::ops::Range;

use ndarray::Array3;

use super::bars::Bar;
use super::scaling::Scaler;
use crate::error::{Error, Result};

/// Bars per timeframe used to fit the scaler and the strategy thresholds.
pub const DEFAULT_CALIBRATION_BARS: usize = 10_000;

/// One context of scaled bars and the realized (unscaled) return of the bar after it.
#[derive(Debug, Clone, PartialEq)]
pub struct TestWindow {
    pub inputs: Vec<[f64; 3]>,
    pub realized_next_y: f64,
    /// `t_open` of the bar being predicted.
    pub t_pred: i64,
}

/// All slide-1 windows over a run of consecutive bars, stored once as the
/// scaled series rather than as overlapping copies.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    scaled: Vec<[f64; 3]>,
    raw_y: Vec<f64>,
    t_open: Vec<i64>,
    context_len: usize,
}

impl WindowSet {
    /// Windows over every position of `bars` that has a successor bar.
    pub fn new(bars: &[Bar], scaler: &Scaler, context_len: usize) -> Result<Self> {
        if context_len == 0 || bars.len() <= context_len {
            return Err(Error::InsufficientData(format!(
                "{} bars cannot fill a {context_len}-bar context plus one target",
                bars.len()
            )));
        }
        let scaled: Vec<[f64; 3]> = bars.iter().map(|b| scaler.scale(b.to_array())).collect();
        if scaled.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InsufficientData("scaled bars contain non-finite values".into()));
        }
        Ok(Self {
            scaled,
            raw_y: bars.iter().map(|b| b.y).collect(),
            t_open: bars.iter().map(|b| b.t_open).collect(),
            context_len,
        })
    }

    pub fn len(&self) -> usize {
        self.scaled.len() - self.context_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn inputs(&self, i: usize) -> &[[f64; 3]] {
        &self.scaled[i..i + self.context_len]
    }

    pub fn realized_next_y(&self, i: usize) -> f64 {
        self.raw_y[i + self.context_len]
    }

    pub fn t_pred(&self, i: usize) -> i64 {
        self.t_open[i + self.context_len]
    }

    pub fn get(&self, i: usize) -> TestWindow {
        TestWindow { inputs: self.inputs(i).to_vec(), realized_next_y: self.realized_next_y(i), t_pred: self.t_pred(i) }
    }

    pub fn iter(&self) -> impl Iterator<Item = TestWindow> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Inputs of windows `range` as a `B × T × 3` batch.
    pub fn batch(&self, range: Range<usize>) -> Array3<f64> {
        let t = self.context_len;
        let mut out = Array3::zeros((range.len(), t, 3));
        for (b, i) in range.enumerate() {
            for (j, row) in self.inputs(i).iter().enumerate() {
                for k in 0..3 {
                    out[[b, j, k]] = row[k];
                }
            }
        }
        out
    }
}

/// Test windows over the bars after the calibration prefix, so that no
/// window contains a calibration row.
pub fn build_test_windows(bars: &[Bar], scaler: &Scaler, calibration_bars: usize, context_len: usize) -> Result<WindowSet> {
    let test = bars.get(calibration_bars..).ok_or_else(|| {
        Error::InsufficientData(format!("{} bars do not cover a {calibration_bars}-bar calibration prefix", bars.len()))
    })?;
    WindowSet::new(test, scaler, context_len)
}
