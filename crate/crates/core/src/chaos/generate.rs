use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lorenz::{sample_params, LorenzIntegrator, LorenzParams, LorenzState};
use crate::error::{Error, Result};

/// Sequence indices at or above this value are reserved for held-out
/// validation data; a training stream never reaches them.
pub const VALIDATION_INDEX_BASE: u64 = 1 << 63;

/// Settings for turning one Lorenz trajectory into a training sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub dt: f64,
    pub warmup_steps: u64,
    pub context_len: usize,
    /// Integration steps between retained points (the predictive horizon).
    pub interval: u32,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { dt: 0.01, warmup_steps: 1000, context_len: 512, interval: 1000, seed: 0 }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.context_len == 0 {
            return Err(Error::InvalidConfig("context_len must be at least 1".into()));
        }
        if self.interval == 0 {
            return Err(Error::InvalidConfig("interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Integration steps consumed by one sequence, warm-up included.
    pub fn steps_per_sequence(&self) -> u64 {
        self.warmup_steps + (self.context_len as u64 + 1) * self.interval as u64
    }
}

/// `context_len` resampled points and their one-step-ahead successors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    pub inputs: Vec<[f64; 3]>,
    pub targets: Vec<[f64; 3]>,
    pub params: LorenzParams,
    pub seed: u64,
}

/// Per-sequence seed: a bijective 64-bit finalizer applied to
/// `base + index·φ`, so it is injective in `index` for a fixed base.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate one training sequence. Parameters and the initial state are
/// drawn from `sample_params` with an RNG seeded by `cfg.seed`.
pub fn generate_sequence(cfg: &GenConfig) -> Result<TrainingSequence> {
    generate_sequence_counted(cfg).map(|(seq, _)| seq)
}

/// Like [`generate_sequence`], also returning the number of integration
/// steps actually taken.
pub fn generate_sequence_counted(cfg: &GenConfig) -> Result<(TrainingSequence, u64)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (params, init) = sample_params(&mut rng);
    let points = resample(params, init, cfg, cfg.context_len + 1)?;
    let (points, steps) = points;
    let inputs = points[..cfg.context_len].to_vec();
    let targets = points[1..].to_vec();
    Ok((TrainingSequence { inputs, targets, params, seed: cfg.seed }, steps))
}

fn resample(
    params: LorenzParams,
    init: LorenzState,
    cfg: &GenConfig,
    n_points: usize,
) -> Result<(Vec<[f64; 3]>, u64)> {
    let mut integ = LorenzIntegrator::new(init, params, cfg.dt);
    let fail = |integ: &LorenzIntegrator| Error::NonFiniteTrajectory { seed: cfg.seed, step: integ.steps() };
    if !integ.advance(cfg.warmup_steps) {
        return Err(fail(&integ));
    }
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        if !integ.advance(cfg.interval as u64) {
            return Err(fail(&integ));
        }
        points.push(integ.state.to_array());
    }
    Ok((points, integ.steps()))
}

/// A resampled trajectory of `n_points` points for explicit parameters,
/// used by the diagnostics and the synthetic market.
pub fn resampled_trajectory(
    params: LorenzParams,
    init: LorenzState,
    cfg: &GenConfig,
    n_points: usize,
) -> Result<Vec<[f64; 3]>> {
    cfg.validate()?;
    resample(params, init, cfg, n_points).map(|(p, _)| p)
}

/// Unbounded stream of training batches.
///
/// Sequence `i` of the stream is generated from `derive_seed(base_seed, i)`,
/// so the stream is reproducible from `(base_seed, position)` alone and the
/// result does not depend on how many rayon workers generate it.
#[derive(Debug, Clone)]
pub struct BatchStream {
    base_seed: u64,
    cfg: GenConfig,
    batch_size: usize,
    next_index: u64,
    steps: u64,
    skipped: Vec<u64>,
}

impl BatchStream {
    pub fn new(base_seed: u64, cfg: GenConfig, batch_size: usize) -> Result<Self> {
        cfg.validate()?;
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(Self { base_seed, cfg, batch_size, next_index: 0, steps: 0, skipped: Vec::new() })
    }

    /// Resume a stream at a previously recorded position.
    pub fn at_position(mut self, next_index: u64) -> Self {
        self.next_index = next_index;
        self
    }

    /// Index of the next sequence that will be generated.
    pub fn position(&self) -> u64 {
        self.next_index
    }

    /// Integration steps performed by this stream so far.
    pub fn integration_steps(&self) -> u64 {
        self.steps
    }

    /// Seeds that produced non-finite trajectories and were skipped.
    pub fn skipped_seeds(&self) -> &[u64] {
        &self.skipped
    }

    pub fn next_batch(&mut self) -> Vec<TrainingSequence> {
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            let want = (self.batch_size - batch.len()) as u64;
            let start = self.next_index;
            let results: Vec<_> = (start..start + want)
                .into_par_iter()
                .map(|i| {
                    let cfg = GenConfig { seed: derive_seed(self.base_seed, i), ..self.cfg };
                    generate_sequence_counted(&cfg)
                })
                .collect();
            self.next_index += want;
            for r in results {
                match r {
                    Ok((seq, steps)) => {
                        self.steps += steps;
                        batch.push(seq);
                    }
                    Err(Error::NonFiniteTrajectory { seed, step }) => {
                        log::warn!("skipping seed {seed}: trajectory non-finite at step {step}");
                        self.steps += step;
                        self.skipped.push(seed);
                    }
                    Err(e) => unreachable!("config validated at construction: {e}"),
                }
            }
        }
        batch
    }
}

impl Iterator for BatchStream {
    type Item = Vec<TrainingSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_batch())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small(interval: u32, seed: u64) -> GenConfig {
        GenConfig { context_len: 64, interval, seed, ..GenConfig::default() }
    }

    #[test]
    fn step_count_for_full_length_sequence() {
        let cfg = GenConfig { interval: 1000, seed: 1, ..GenConfig::default() };
        let (seq, steps) = generate_sequence_counted(&cfg).unwrap();
        assert_eq!(steps - cfg.warmup_steps, 513_000);
        assert_eq!(seq.inputs.len(), 512);
        assert_eq!(seq.targets.len(), 512);
    }

    #[test]
    fn targets_are_inputs_shifted_by_one() {
        let seq = generate_sequence(&small(100, 5)).unwrap();
        for t in 0..seq.inputs.len() - 1 {
            assert_eq!(seq.targets[t], seq.inputs[t + 1]);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        assert_eq!(generate_sequence(&small(37, 99)).unwrap(), generate_sequence(&small(37, 99)).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate_sequence(&GenConfig { dt: 0.0, ..small(1, 0) }).is_err());
        assert!(generate_sequence(&GenConfig { interval: 0, ..small(1, 0) }).is_err());
        assert!(generate_sequence(&GenConfig { context_len: 0, ..small(1, 0) }).is_err());
        assert!(BatchStream::new(0, small(1, 0), 0).is_err());
    }

    #[test]
    fn divergent_step_reports_non_finite() {
        let cfg = GenConfig { dt: 1.0, ..small(10, 2) };
        assert!(matches!(generate_sequence(&cfg), Err(Error::NonFiniteTrajectory { .. })));
    }

    #[test]
    fn batches_never_share_seeds_and_restart_reproduces() {
        let mut s = BatchStream::new(42, small(10, 0), 4).unwrap();
        let b0 = s.next_batch();
        let b1 = s.next_batch();
        let seeds: HashSet<u64> = b0.iter().chain(&b1).map(|q| q.seed).collect();
        assert_eq!(seeds.len(), 8);

        let again = BatchStream::new(42, small(10, 0), 4).unwrap().next_batch();
        assert_eq!(b0, again);
        assert_eq!(s.position(), 8);
    }

    #[test]
    fn resumed_stream_continues_where_it_left_off() {
        let mut s = BatchStream::new(7, small(10, 0), 3).unwrap();
        s.next_batch();
        let b1 = s.next_batch();
        let resumed = BatchStream::new(7, small(10, 0), 3).unwrap().at_position(3).next_batch();
        assert_eq!(b1, resumed);
    }

    #[test]
    fn stream_counts_integration_steps() {
        let cfg = small(100, 0);
        let mut s = BatchStream::new(1, cfg, 5).unwrap();
        for _ in 0..4 {
            s.next_batch();
        }
        assert_eq!(s.integration_steps(), 20 * cfg.steps_per_sequence());
    }

    #[test]
    fn derived_seeds_are_injective_over_a_prefix() {
        let seeds: HashSet<u64> = (0..100_000).map(|i| derive_seed(123, i)).collect();
        assert_eq!(seeds.len(), 100_000);
    }
}
