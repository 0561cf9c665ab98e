//! Experiment orchestration: configuration, training and evaluation runs,
//! metric aggregation, parameter sweeps, CSV output and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod gradcheck;
pub mod metrics;
pub mod run;
pub mod sweep;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use config::{load_config, ConfigFile, Grid, RunConfig};
pub use csv::{emit_csv, emit_training_log, format_g, write_csv};
pub use gradcheck::{gradcheck_suite, GradCheckCase, NetRole};
pub use metrics::{action_stats, compute_metrics, ActionStats, RunMetrics};
pub use run::{evaluate_agent, evaluate_baseline, train_run};
pub use sweep::{sweep, CellFailure, SweepRow, SweepTable};
