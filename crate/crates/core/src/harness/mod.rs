//! Experiment driver and evaluation suite.

mod checkpoint;
mod compare;
mod config;
mod etror;
mod metrics;
mod trainer;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointPayload, StandaloneState,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use compare::{compare_runs, Comparison, RunSummary};
pub use config::{ExperimentConfig, Mode, NetsConfig, Seeds};
pub use etror::{
    compute_etror, smooth, verify_dominance, EtrorResult, DEFAULT_EPSILON_TERM, DEFAULT_WINDOW,
};
pub use metrics::{
    read_metrics_csv, read_metrics_file, write_metrics_csv, write_metrics_file, MetricsRecord,
    METRICS_HEADER,
};
pub use trainer::{evaluate_checkpoint, resume_experiment, run_experiment, RunOutput, Session};
