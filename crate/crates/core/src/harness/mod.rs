//! Experiment harness: configs, training loops, metrics, checkpoints, plots and the CLI.

pub mod benchmark;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod train;

pub use benchmark::{run_benchmark, BenchmarkReport, BenchmarkRow};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta, RngState};
pub use config::{load_map, Algo, RunConfig, BUILTIN_MAPS, CONFIG_KEYS};
pub use metrics::{
    avg_reward_window, first_threshold_crossing, success_rate_window, EpisodeRecord, MetricsSeries,
};
pub use train::{evaluate, train, train_with, EvalEpisode, EvalReport, Session, TrainReport};

use crate::agents::AgentError;
use crate::mazeenv::{EnvError, MapError, ObservationError, RayError};
use crate::numcore::NumError;
use crate::vae::{DatasetError, VaeTrainError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Format(String),
    #[error("vae-ppo needs a trained VAE (set vae_checkpoint)")]
    MissingVae,
    #[error("checkpoint is for {got}, expected {expected}")]
    AlgoMismatch { expected: String, got: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    VaeTrain(#[from] VaeTrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl HarnessError {
    /// 1 for bad invocations or configs, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::MissingVae => 1,
            _ => 2,
        }
    }
}
