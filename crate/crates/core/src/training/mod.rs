//! Pretraining: encoders, optimizers, learning-rate schedules and the loop with
//! its checkpoints and metrics log.

mod config;
mod model;
mod optim;
mod pretrain;
mod schedule;

pub use config::{
    scale_blur, MomentumSchedule, TrainConfig, BLUR_REFERENCE_SIDE, DESK_BATCH, DESK_EPOCHS, DESK_LARS_TRUST,
    DESK_MIN_SCALE, DESK_QUEUE, DESK_WARMUP,
};
pub use model::{EncoderSpec, Network, CONV};
pub use optim::{
    lars_local_lr, lars_update, sgd_update, Optimizer, OptimizerSpec, DEFAULT_MOMENTUM, LARS_EPS, LARS_TRUST,
};
pub use pretrain::{
    epoch_order, network_for, pretrain, read_metrics_csv, sidecar_path, steps_per_epoch, write_metrics_csv, Checkpoint,
    EpochMetrics, RngState, TrainOutcome, TrainState, Trainer,
};
pub use schedule::{cosine_lr, scaled_lr};
