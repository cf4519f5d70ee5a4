use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::FrameDataset;
use super::model::{observations_to_batch, recon_loss, standard_noise, VaeLossParts, VaeModel, VaeParams};
use crate::numcore::{AdamConfig, AdamState, NumError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub kl_weight: f64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            kl_weight: 1.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VaeTrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("batch size {batch} exceeds dataset size {count}")]
    BatchTooLarge { batch: usize, count: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

pub struct VaeTrainOutcome {
    pub params: VaeParams,
    /// Loss of every update, in order.
    pub history: Vec<VaeLossParts>,
}

/// Trains from `init` (or a fresh initialization) with shuffled batches
/// drawn without replacement, one Adam step per batch.
pub fn train_vae<R: Rng + ?Sized>(
    model: &VaeModel,
    init: Option<VaeParams>,
    data: &FrameDataset,
    cfg: &VaeTrainConfig,
    rng: &mut R,
    mut on_update: impl FnMut(usize, &VaeLossParts),
) -> Result<VaeTrainOutcome, VaeTrainError> {
    if data.is_empty() {
        return Err(VaeTrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.batch_size > data.len() {
        return Err(VaeTrainError::BatchTooLarge {
            batch: cfg.batch_size,
            count: data.len(),
        });
    }
    let params = match init {
        Some(p) => p,
        None => model.init_params(rng),
    };
    model.check_params(&params)?;
    let mut merged = params.merged();
    let mut adam = AdamState::new(&merged, AdamConfig::with_lr(cfg.lr));
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let images = observations_to_batch(chunk.iter().map(|&i| &data.frames()[i]));
            let noise = standard_noise(&[chunk.len(), model.latent], rng);
            let current = VaeParams::split(&merged);
            let (parts, grads) = model.loss_and_grads(&current, &images, &noise, cfg.kl_weight)?;
            adam.step(&mut merged, &grads.merged())?;
            on_update(history.len(), &parts);
            history.push(parts);
        }
    }
    Ok(VaeTrainOutcome {
        params: VaeParams::split(&merged),
        history,
    })
}

/// Mean per-pixel squared error of `decode(encode(x).mu)` over a dataset.
pub fn reconstruction_mse(
    model: &VaeModel,
    params: &VaeParams,
    data: &FrameDataset,
) -> Result<f64, NumError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in data.frames().chunks(64) {
        let x = observations_to_batch(chunk);
        let (mu, _) = model.encode(params, &x)?;
        let recon = model.decode(params, &mu)?;
        total += recon_loss(&x, &recon)? * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Per-dimension mean of `mu` and mean of `exp(log_var)` over a dataset.
pub fn latent_statistics(
    model: &VaeModel,
    params: &VaeParams,
    data: &FrameDataset,
) -> Result<(Vec<f64>, Vec<f64>), NumError> {
    let l = model.latent;
    let mut mu_sum = vec![0.0; l];
    let mut var_sum = vec![0.0; l];
    for chunk in data.frames().chunks(64) {
        let x = observations_to_batch(chunk);
        let (mu, lv) = model.encode(params, &x)?;
        for i in 0..chunk.len() {
            for j in 0..l {
                mu_sum[j] += mu.data()[i * l + j] as f64;
                var_sum[j] += (lv.data()[i * l + j] as f64).exp();
            }
        }
    }
    let n = data.len().max(1) as f64;
    Ok((
        mu_sum.iter().map(|s| s / n).collect(),
        var_sum.iter().map(|s| s / n).collect(),
    ))
}
