//! Single-pass streaming pretraining: schedule, clipping, AdamW and the loop.

mod log;
mod optim;
mod schedule;
mod trainer;

pub use log::{MetricsLog, MetricsRecord};
pub use optim::{adam_update, clip_global_norm, AdamConfig, OptimizerState};
pub use schedule::lr_schedule;
pub use trainer::{train, TrainConfig, TrainOptions, TrainOutcome};
