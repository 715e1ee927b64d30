//! Training of direct and inverse networks.

mod clip;
mod optim;
pub mod penalty;
mod schedule;
mod sweep;
mod train;

pub use clip::{clip_by_norm, clip_gradients, l2_norm, ClipPolicy, GradientClipper};
pub use optim::{optimizer_steps_on_thread, Optimizer, OptimizerKind};
pub use penalty::{phi, phi_derivative, price_sensitivities, PenaltyConfig, PriceSensitivities};
pub use schedule::{plateau_schedule, PlateauConfig, PlateauScheduler};
pub use sweep::{penalty_sweep, sweep_table, SweepConfig, SweepPoint, SweepRow};
pub use train::{
    evaluate, penalized_loss, penalized_loss_and_grad, train, train_with_callback, write_metrics_csv,
    write_timing_csv, EpochRecord, LossBreakdown, Metrics, TrainConfig, TrainReport, METRICS_HEADER,
};
