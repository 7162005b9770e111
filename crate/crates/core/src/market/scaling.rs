use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bars::Bar;
use crate::chaos::{derive_seed, generate_sequence, GenConfig};
use crate::error::{Error, Result};
use crate::stats::mean_std;

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Moments {
    pub fn of(points: impl Iterator<Item = [f64; 3]>) -> Self {
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for p in points {
            for k in 0..3 {
                cols[k].push(p[k]);
            }
        }
        let m: Vec<(f64, f64)> = cols.iter().map(|c| mean_std(c)).collect();
        Self { mean: [m[0].0, m[1].0, m[2].0], std: [m[0].1, m[1].1, m[2].1] }
    }
}

/// Moments of Lorenz training inputs at `interval`, pooled over
/// `n_sequences` sequences drawn from `seed`.
pub fn reference_moments(interval: u32, n_sequences: usize, seed: u64) -> Result<Moments> {
    if n_sequences == 0 {
        return Err(Error::InvalidConfig("reference moments need at least one sequence".into()));
    }
    let gen = GenConfig { interval, ..GenConfig::default() };
    let seqs = (0..n_sequences as u64)
        .into_par_iter()
        .map(|i| generate_sequence(&GenConfig { seed: derive_seed(seed, i), ..gen }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Moments::of(seqs.iter().flat_map(|s| s.inputs.iter().copied())))
}

/// Per-dimension affine map `v · gain + offset` that moves the calibration
/// segment's first two moments onto the reference moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub gain: [f64; 3],
    pub offset: [f64; 3],
    /// `t_open` of the first and last calibration bars.
    pub calibration_range: (i64, i64),
    pub calibration_bars: usize,
    pub reference_interval: u32,
    pub reference: Moments,
}

impl Scaler {
    pub fn scale(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|k| v[k] * self.gain[k] + self.offset[k])
    }

    pub fn unscale(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|k| (v[k] - self.offset[k]) / self.gain[k])
    }
}

/// Fit the scaler on `calibration` bars only.
pub fn fit_scaler(calibration: &[Bar], reference: &Moments, reference_interval: u32) -> Result<Scaler> {
    let (first, last) = match (calibration.first(), calibration.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyInput),
    };
    let calib = Moments::of(calibration.iter().map(Bar::to_array));
    let mut gain = [0.0; 3];
    let mut offset = [0.0; 3];
    for (k, name) in ['x', 'y', 'z'].into_iter().enumerate() {
        let g = reference.std[k] / calib.std[k];
        if calib.std[k] == 0.0 || !g.is_finite() || g == 0.0 {
            return Err(Error::DegenerateCalibration(name));
        }
        gain[k] = g;
        offset[k] = reference.mean[k] - calib.mean[k] * g;
    }
    Ok(Scaler {
        gain,
        offset,
        calibration_range: (first.t_open, last.t_open),
        calibration_bars: calibration.len(),
        reference_interval,
        reference: *reference,
    })
}
