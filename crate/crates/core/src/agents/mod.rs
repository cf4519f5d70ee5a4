//! E2E-DQN, E2E-PPO and the latent-space PPO planner.

mod dqn;
mod nets;
mod ppo;
mod replay;
mod state;

pub use dqn::{argmax, dqn_targets, epsilon_greedy, DqnAgent, DqnConfig, DqnUpdate};
pub use nets::{build_decoupled_network, build_e2e_network, Head};
pub use ppo::{
    clipped_surrogate, compute_gae, gaussian_log_prob, normalize_advantages, PolicyOutput,
    PpoAgent, PpoConfig, PpoLoss, PpoStats, Rollout,
};
pub use replay::{Experience, ReplayBuffer};
pub use state::{batch_states, scalar_features, Features, PlannerState, AUX_DIM};

use crate::numcore::NumError;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("q-value vector is empty")]
    EmptyQ,
    #[error("batch mixes pixel and latent states")]
    MixedFeatures,
    #[error(transparent)]
    Num(#[from] NumError),
}
