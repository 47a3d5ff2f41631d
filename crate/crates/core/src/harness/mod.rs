//! Experiment plumbing: configuration, seeded runs, verification and metrics.

mod config;
mod metrics;
mod record;
mod run;
mod verify;

use thiserror::Error;

pub use config::{
    file_lines, parse_inputs, parse_seeds, parse_stop, ConfigError, ExperimentConfig, InputSpec,
    RunMode, StopSpec, DESK_M, DESK_N, DESK_T,
};
pub use metrics::{
    emit_metrics, emit_metrics_file, parse_metrics, MetricsHeader, METRICS_SCHEMA, METRICS_VERSION,
};
pub use record::{
    BoardRecord, EpochWeights, FinalizedBoard, MatchingCheckpoint, ProcessAccepts, RunRecord,
    RECORD_SCHEMA,
};
pub use run::{
    game_config, game_record, run_experiment, run_experiment_full, run_game_seed, run_message,
    run_seed, worker_threads, RunMetrics, SeedRun,
};
pub use verify::{verify_record, InvariantVerdict, VerdictBundle, LIVENESS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Adversary(#[from] crate::adversary::AdversaryError),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
