//! Synthetic chaotic training data: Lorenz integration, resampling into
//! one-step-ahead training sequences, the unbounded batch stream and the
//! resampling diagnostics.

mod diagnostics;
mod generate;
mod lorenz;

pub use diagnostics::{autocorrelation, export_attractor, read_attractor};
pub use generate::{
    derive_seed, generate_sequence, generate_sequence_counted, resampled_trajectory, BatchStream,
    GenConfig, TrainingSequence, VALIDATION_INDEX_BASE,
};
pub use lorenz::{lorenz_deriv, rk4_step, sample_params, LorenzIntegrator, LorenzParams, LorenzState};
