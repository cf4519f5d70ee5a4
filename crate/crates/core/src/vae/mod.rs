//! Convolutional VAE that compresses a 64x48 RGB frame into a 32-dim latent.

mod dataset;
mod model;
mod train;

pub use dataset::{collect_frames, DatasetError, FrameDataset, NVFD_MAGIC, NVFD_VERSION};
pub use model::{
    kl_loss, kl_term, latent_for_planner, observations_to_batch, recon_loss, reparam_sample,
    reparameterize, standard_noise, total_loss, VaeLossParts, VaeModel, VaeParams, LATENT_DIM,
};
pub use train::{
    latent_statistics, reconstruction_mse, train_vae, VaeTrainConfig, VaeTrainError,
    VaeTrainOutcome,
};
