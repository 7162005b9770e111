//! Evaluation quantities: the information coefficient, held-out evaluation
//! of a forecaster, threshold crossings of IC curves and the horizon scaling fit.

use std::path::Path;

use ndarray::{s, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{derive_seed, generate_sequence, GenConfig, TrainingSequence, VALIDATION_INDEX_BASE};
use crate::error::{Error, Result};
use crate::model::{Batch, Forecaster};
use crate::stats::pearson;

/// Pearson correlation between predictions and realized targets.
pub fn information_coefficient(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() < 3 {
        return Err(Error::InsufficientData(format!("IC needs at least 3 samples, got {}", pred.len())));
    }
    pearson(pred, target)
}

/// Loss and per-dimension IC of one-step predictions pooled over a held-out set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub loss: f64,
    pub ic: [f64; 3],
    pub n_predictions: usize,
}

/// A fixed set of held-out sequences drawn from the reserved validation
/// index range of `seed`, so it never overlaps a training stream with the same base seed.
#[derive(Debug, Clone)]
pub struct HeldOutSet {
    pub sequences: Vec<TrainingSequence>,
}

impl HeldOutSet {
    pub fn generate(gen: &GenConfig, n_sequences: usize, seed: u64) -> Result<Self> {
        Self::generate_range(gen, 0..n_sequences as u64, seed)
    }

    /// Sequences with validation indices in `range`.
    pub fn generate_range(gen: &GenConfig, range: std::ops::Range<u64>, seed: u64) -> Result<Self> {
        if range.is_empty() {
            return Err(Error::InvalidConfig("held-out set needs at least one sequence".into()));
        }
        let sequences = range
            .into_par_iter()
            .map(|i| generate_sequence(&GenConfig { seed: derive_seed(seed, VALIDATION_INDEX_BASE + i), ..*gen }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sequences })
    }

    /// Run `model` over every sequence, returning the per-position predictions
    /// (`n × T × 3`) alongside the summary.
    pub fn predict(&self, model: &dyn Forecaster) -> Result<Array3<f64>> {
        let t = self.sequences[0].inputs.len();
        let mut out = Array3::zeros((self.sequences.len(), t, 3));
        for (c, chunk) in self.sequences.chunks(16).enumerate() {
            let batch = Batch::from_sequences(chunk)?;
            let pred = model.forecast(batch.inputs.view())?;
            out.slice_mut(s![c * 16..c * 16 + chunk.len(), .., ..]).assign(&pred);
        }
        Ok(out)
    }

    pub fn evaluate(&self, model: &dyn Forecaster) -> Result<EvalResult> {
        let pred = self.predict(model)?;
        let mut p = [Vec::new(), Vec::new(), Vec::new()];
        let mut y = [Vec::new(), Vec::new(), Vec::new()];
        let mut sq = 0.0;
        for (b, seq) in self.sequences.iter().enumerate() {
            for (t, target) in seq.targets.iter().enumerate() {
                for k in 0..3 {
                    let v = pred[[b, t, k]];
                    sq += (v - target[k]) * (v - target[k]);
                    p[k].push(v);
                    y[k].push(target[k]);
                }
            }
        }
        let n = p[0].len();
        Ok(EvalResult {
            loss: sq / n as f64,
            ic: [
                information_coefficient(&p[0], &y[0])?,
                information_coefficient(&p[1], &y[1])?,
                information_coefficient(&p[2], &y[2])?,
            ],
            n_predictions: n,
        })
    }
}

/// Generate `n_sequences` held-out sequences at `interval` and evaluate
/// `model` on them.
pub fn eval_model(model: &dyn Forecaster, interval: u32, n_sequences: usize, seed: u64) -> Result<EvalResult> {
    let gen = GenConfig { interval, context_len: model.context_len(), ..GenConfig::default() };
    HeldOutSet::generate(&gen, n_sequences, seed)?.evaluate(model)
}

/// IC as a function of training samples, for one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcCurve {
    pub horizon: u32,
    pub points: Vec<(u64, f64)>,
}

impl IcCurve {
    pub fn new(horizon: u32, points: Vec<(u64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig("IC curve sample counts must be strictly increasing".into()));
        }
        Ok(Self { horizon, points })
    }
}

/// Smallest sample count at which the trailing `window`-point moving average
/// of IC reaches `threshold`. The first `window - 1` points average over
/// what is available.
pub fn samples_to_threshold(curve: &IcCurve, threshold: f64, window: usize) -> Option<u64> {
    let w = window.max(1);
    (0..curve.points.len()).find_map(|i| {
        let lo = (i + 1).saturating_sub(w);
        let span = &curve.points[lo..=i];
        let avg = span.iter().map(|p| p.1).sum::<f64>() / span.len() as f64;
        (avg >= threshold).then_some(curve.points[i].0)
    })
}

/// Samples needed to reach the threshold IC at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub horizon: u32,
    pub samples_to_threshold: u64,
}

/// Least-squares line `log10(samples) = slope·horizon + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope; zero when the fit has no residual degrees of freedom.
    pub slope_stderr: f64,
    pub n_points: usize,
}

impl ScalingFit {
    pub fn predict_samples(&self, horizon: f64) -> f64 {
        10f64.powf(self.slope * horizon + self.intercept)
    }
}

pub fn fit_scaling_law(points: &[ScalingPoint]) -> Result<ScalingFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.horizon as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.samples_to_threshold as f64).log10()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let slope_stderr = if points.len() > 2 { (ss_res / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(ScalingFit { slope, intercept, r2, slope_stderr, n_points: points.len() })
}

/// Write an IC curve as CSV `samples_seen,ic`.
pub fn write_ic_curve(curve: &IcCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["samples_seen", "ic"])?;
    for (s, ic) in &curve.points {
        w.write_record([s.to_string(), ic.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
