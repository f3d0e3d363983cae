//! Experiment orchestration: configuration, training and evaluation runs,
//! run checkpoints, metrics files and Q-distribution dumps.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod qdist;
pub mod train;

pub use checkpoint::{build_learner, load_checkpoint, LoadedCheckpoint, RunHeader};
pub use config::{AgentKind, Benchmark, RunConfig, RunSection};
pub use eval::{run_evaluation, EvalOptions, EvalReport, Policy};
pub use metrics::{settling_step, EpisodeMetrics, Summary, TrailingMean};
pub use qdist::{dump_qdist, write_qdist, QdistRow};
pub use train::{run_training, run_training_with, TrainOutcome};
