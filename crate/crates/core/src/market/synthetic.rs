use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::bars::Bar;
use crate::chaos::{resampled_trajectory, sample_params, GenConfig};
use crate::error::{Error, Result};
use crate::stats::mean_std;

/// A synthetic bar series whose `(x, y, z)` follow a resampled Lorenz
/// trajectory plus independent Gaussian noise. The noise standard deviation
/// of each dimension is `noise_ratio` times that dimension's signal standard
/// deviation. Parameters and the initial state are drawn from the training
/// ranges with `seed`.
pub fn synthetic_market(n_bars: usize, interval: u32, noise_ratio: f64, timeframe_s: u64, seed: u64) -> Result<Vec<Bar>> {
    if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise ratio must be non-negative, got {noise_ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (params, init) = sample_params(&mut rng);
    let gen = GenConfig { interval, ..GenConfig::default() };
    let signal = resampled_trajectory(params, init, &gen, n_bars)?;
    let mut out: Vec<Bar> = signal
        .iter()
        .enumerate()
        .map(|(i, p)| Bar { t_open: (i as u64 * timeframe_s * 1000) as i64, x: p[0], y: p[1], z: p[2] })
        .collect();
    for k in 0..3 {
        let col: Vec<f64> = signal.iter().map(|p| p[k]).collect();
        let (_, sd) = mean_std(&col);
        let noise = Normal::new(0.0, noise_ratio * sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for b in out.iter_mut() {
            let v = noise.sample(&mut rng);
            match k {
                0 => b.x += v,
                1 => b.y += v,
                _ => b.z += v,
            }
        }
    }
    Ok(out)
}
