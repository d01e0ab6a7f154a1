//! Adam with a step-halving schedule, per-sequence training, RMSE evaluation
//! and the seeded five-trial protocol.

mod optim;
mod train;
mod trials;

pub use optim::{adam_step, lr_at_epoch, AdamState, LrSchedule};
pub use train::{evaluate_rmse, loss_and_grads, rmse, train_model, RmseReport, TrainConfig};
pub use trials::{
    loss_curve_csv, mean_std, run_trial, run_trials, split_hash, split_indices, train_count,
    Experiment, Split, TrialOutcome, TrialReport, TrialSummary, MIN_SEQUENCES, REPORT_VERSION,
};
