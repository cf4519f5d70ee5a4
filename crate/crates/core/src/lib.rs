//! Mapless visual navigation from RGB observations.
//!
//! * [`numcore`]: tensors, layers, Adam, gradient checking
//! * [`mazeenv`]: grid maze world with raycast rendering and a reset/step API
//! * [`vae`]: convolutional VAE that compresses frames to a 32-dim latent
//! * [`agents`]: E2E-DQN, E2E-PPO and the latent-space PPO planner
//! * [`harness`]: training loops, metrics, checkpoints, benchmark and CLI

pub mod agents;
pub mod harness;
pub mod mazeenv;
pub mod numcore;
pub mod vae;
