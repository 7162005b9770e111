//! Pretraining a small decoder transformer on resampled Lorenz trajectories
//! and evaluating it zero-shot on market trade data.
//!
//! The crate is organised along the pipeline:
//!
//! * [`chaos`]: Lorenz integration, resampled training sequences, the batch stream.
//! * [`model`]: the decoder, its loss and exact gradients, checkpoints.
//! * [`train`]: learning-rate schedule, clipping, AdamW and the streaming loop.
//! * [`metrics`]: information coefficient, held-out evaluation, scaling-law fit.
//! * [`market`]: trade parsing, bar aggregation, calibration scaling, test windows.
//! * [`backtest`]: quantile long/short strategy against the persistence baseline.

pub mod backtest;
pub mod chaos;
mod error;
pub mod market;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod train;

pub use error::{Error, ErrorClass, Result};
