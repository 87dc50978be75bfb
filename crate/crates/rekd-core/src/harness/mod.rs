//! Experiment orchestration: configuration, training loops for the
//! relation-distillation run and its baselines, linear-probe evaluation,
//! per-epoch records, and the file-writing experiment driver.

mod config;
mod experiment;
mod probe;
mod train;

pub use config::{RunMode, TrainConfig};
pub use experiment::{run_experiment, ExperimentError, Overrides};
pub use probe::linear_probe;
pub use train::{
    train_baseline_nce, train_rekd, train_supmoco, EncoderRole, EpochRecord, RunDiagnostics,
    TrainResult, RECORDS_HEADER,
};
