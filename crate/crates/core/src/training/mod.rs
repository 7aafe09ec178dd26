//! Supervised sequence-classification training: initialization, RMSprop,
//! global-norm clipping, the halving learning-rate schedule and
//! validation-based checkpoint selection.

pub mod checkpoint;
mod init;
mod model;
mod optim;
mod train;

pub use init::{initialize, resolve_alpha, InitSpec, ModelShape};
pub use model::{batch_loss_and_grad, evaluate, BatchResult, ModelBundle};
pub use optim::{clip_global_norm, lr_at_epoch, RmsProp, ALPHA_MAX, ALPHA_MIN, RMSPROP_EPS, RMSPROP_RHO};
pub use train::{
    log_to_csv, mean_profile, select_best, train, train_alpha_grid, EpochRecord, GridRun,
    TrainAbort, TrainConfig, TrainOutcome,
};

/// The `α = k/T` multipliers searched over.
pub const ALPHA_MULTIPLIER_GRID: [f64; 3] = [1.0, 5.0, 25.0];
