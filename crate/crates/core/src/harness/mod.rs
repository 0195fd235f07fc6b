//! Training loop, experiment presets and run artefacts.

mod adam;
mod config;
mod output;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{ExperimentConfig, Profile, TrainingConfig};
pub use output::{
    write_metrics_csv, write_oracle_csv, write_report_json, write_sweep_csv, write_trajectories_csv, write_trajectory_csv,
};
pub use train::{
    compare_losses, config_hash, eval_grid, load_or_generate, sweep, train, train_on, ComparisonRow, EpochRecord,
    Evaluator, RunReport, SweepRow, TrainOutcome,
};
