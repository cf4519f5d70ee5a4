use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mazeenv::{Observation, OBS_CHANNELS, OBS_HEIGHT, OBS_WIDTH};
use crate::numcore::{
    Activation, ConvGeometry, LayerSpec, Network, NumError, ParamStore, Real, Tensor,
};

pub const LATENT_DIM: usize = 32;

/// Encoder and decoder parameters, kept in separate stores.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams<T = f32> {
    pub encoder: ParamStore<T>,
    pub decoder: ParamStore<T>,
}

impl<T: Real> VaeParams<T> {
    pub fn cast<U: Real>(&self) -> VaeParams<U> {
        VaeParams {
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
        }
    }

    /// Single store with `encoder.` / `decoder.` prefixes.
    pub fn merged(&self) -> ParamStore<T> {
        let mut s = self.encoder.prefixed("encoder");
        s.extend(self.decoder.prefixed("decoder"))
            .expect("prefixes keep names unique");
        s
    }

    pub fn split(merged: &ParamStore<T>) -> Self {
        Self {
            encoder: merged.strip_prefix("encoder"),
            decoder: merged.strip_prefix("decoder"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VaeLossParts {
    pub loss_r: f64,
    pub loss_c: f64,
    pub loss: f64,
}

/// Network pair with a Gaussian latent bottleneck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub encoder: Network,
    pub decoder: Network,
    pub latent: usize,
}

impl VaeModel {
    /// The 64x48 RGB model with a 32-dim latent.
    pub fn standard() -> Self {
        let relu = Activation::ReLU;
        let conv = |i, o| LayerSpec::conv(ConvGeometry::new(i, o, 4, 2, 0), relu);
        let encoder = Network::new(
            vec![OBS_CHANNELS, OBS_HEIGHT, OBS_WIDTH],
            vec![
                conv(3, 32),
                conv(32, 64),
                conv(64, 128),
                conv(128, 256),
                LayerSpec::dense(512, 2 * LATENT_DIM, Activation::Identity),
            ],
            None,
        )
        .expect("standard encoder is valid");
        let deconv = |i, o, k, a| LayerSpec::deconv(ConvGeometry::new(i, o, k, 2, 0), a);
        let decoder = Network::new(
            vec![LATENT_DIM],
            vec![
                LayerSpec::dense(LATENT_DIM, 512, relu),
                LayerSpec::unflatten(256, 1, 2),
                deconv(256, 128, 4, relu),
                deconv(128, 64, 4, relu),
                deconv(64, 32, 4, relu),
                deconv(32, 3, 6, Activation::Sigmoid),
            ],
            None,
        )
        .expect("standard decoder is valid");
        Self {
            encoder,
            decoder,
            latent: LATENT_DIM,
        }
    }

    /// Same layer kinds at 8x6 with a 4-dim latent, small enough for finite differences.
    pub fn thumbnail() -> Self {
        let relu = Activation::ReLU;
        let encoder = Network::new(
            vec![3, 6, 8],
            vec![
                LayerSpec::conv(ConvGeometry::new(3, 4, 2, 2, 0), relu),
                LayerSpec::conv(ConvGeometry::new(4, 6, 2, 1, 0), relu),
                LayerSpec::dense(36, 8, Activation::Identity),
            ],
            None,
        )
        .expect("thumbnail encoder is valid");
        let decoder = Network::new(
            vec![4],
            vec![
                LayerSpec::dense(4, 36, relu),
                LayerSpec::unflatten(6, 2, 3),
                LayerSpec::deconv(ConvGeometry::new(6, 4, 2, 1, 0), relu),
                LayerSpec::deconv(ConvGeometry::new(4, 3, 2, 2, 0), Activation::Sigmoid),
            ],
            None,
        )
        .expect("thumbnail decoder is valid");
        Self {
            encoder,
            decoder,
            latent: 4,
        }
    }

    pub fn image_shape(&self) -> &[usize] {
        self.encoder.input_shape()
    }

    pub fn image_len(&self) -> usize {
        self.image_shape().iter().product()
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> VaeParams {
        VaeParams {
            encoder: self.encoder.init_params(rng),
            decoder: self.decoder.init_params(rng),
        }
    }

    pub fn check_params<T: Real>(&self, params: &VaeParams<T>) -> Result<(), NumError> {
        self.encoder.check_params(&params.encoder)?;
        self.decoder.check_params(&params.decoder)
    }

    /// `(mu, log_var)`, each `[n, latent]`, for a batch of images `[n, c, h, w]`.
    pub fn encode<T: Real>(
        &self,
        params: &VaeParams<T>,
        images: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>), NumError> {
        let out = self.encoder.predict(&params.encoder, images, None)?;
        Ok(split_halves(&out, self.latent))
    }

    /// Reconstructions `[n, c, h, w]` in `[0, 1]` for latents `[n, latent]`.
    pub fn decode<T: Real>(&self, params: &VaeParams<T>, z: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        self.decoder.predict(&params.decoder, z, None)
    }

    /// Loss of a batch with fixed standard-normal `noise` (`[n, latent]`), plus
    /// the ReLU pattern of both halves for kink detection.
    pub fn loss_with_noise<T: Real>(
        &self,
        params: &VaeParams<T>,
        images: &Tensor<T>,
        noise: &Tensor<T>,
        kl_weight: f64,
    ) -> Result<(VaeLossParts, Vec<bool>), NumError> {
        let (enc_out, enc_cache) = self.encoder.forward(&params.encoder, images, None)?;
        let (mu, log_var) = split_halves(&enc_out, self.latent);
        let z = reparameterize(&mu, &log_var, noise)?;
        let (recon, dec_cache) = self.decoder.forward(&params.decoder, &z, None)?;
        let parts = total_loss(images, &recon, &mu, &log_var, kl_weight)?;
        let mut pattern = enc_cache.relu_pattern(&self.encoder);
        pattern.extend(dec_cache.relu_pattern(&self.decoder));
        Ok((parts, pattern))
    }

    /// Batch loss and gradients with respect to every parameter.
    pub fn loss_and_grads(
        &self,
        params: &VaeParams,
        images: &Tensor,
        noise: &Tensor,
        kl_weight: f64,
    ) -> Result<(VaeLossParts, VaeParams), NumError> {
        let n = images.batch();
        let l = self.latent;
        let (enc_out, enc_cache) = self.encoder.forward(&params.encoder, images, None)?;
        let (mu, log_var) = split_halves(&enc_out, l);
        let z = reparameterize(&mu, &log_var, noise)?;
        let (recon, dec_cache) = self.decoder.forward(&params.decoder, &z, None)?;
        let parts = total_loss(images, &recon, &mu, &log_var, kl_weight)?;

        let per = self.image_len();
        let scale = 2.0 / (per * n) as f32;
        let mut drecon = Tensor::zeros(recon.shape());
        for ((d, &r), &x) in drecon.data_mut().iter_mut().zip(recon.data()).zip(images.data()) {
            *d = scale * (r - x);
        }
        let dec_grads = self.decoder.backward(&params.decoder, &dec_cache, &drecon)?;
        let dz = dec_grads.input;

        let kl_scale = (kl_weight / (l * n) as f64) as f32;
        let mut denc = Tensor::zeros(&[n, 2 * l]);
        for i in 0..n {
            for j in 0..l {
                let m = mu.data()[i * l + j];
                let lv = log_var.data()[i * l + j];
                let g = dz.data()[i * l + j];
                let e = noise.data()[i * l + j];
                let row = &mut denc.data_mut()[i * 2 * l..(i + 1) * 2 * l];
                row[j] = g + kl_scale * m;
                row[l + j] = g * e * 0.5 * (0.5 * lv).exp() + kl_scale * 0.5 * (lv.exp() - 1.0);
            }
        }
        let enc_grads = self.encoder.param_gradients(&params.encoder, &enc_cache, &denc)?;
        Ok((
            parts,
            VaeParams {
                encoder: enc_grads,
                decoder: dec_grads.params,
            },
        ))
    }
}

fn split_halves<T: Real>(out: &Tensor<T>, l: usize) -> (Tensor<T>, Tensor<T>) {
    let n = out.batch();
    let mut mu = Vec::with_capacity(n * l);
    let mut lv = Vec::with_capacity(n * l);
    for i in 0..n {
        let row = out.item(i);
        mu.extend_from_slice(&row[..l]);
        lv.extend_from_slice(&row[l..2 * l]);
    }
    (
        Tensor::new(vec![n, l], mu).expect("sizes agree"),
        Tensor::new(vec![n, l], lv).expect("sizes agree"),
    )
}

/// `z = mu + exp(log_var / 2) * noise`.
pub fn reparameterize<T: Real>(
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    noise: &Tensor<T>,
) -> Result<Tensor<T>, NumError> {
    for (what, t) in [("log_var", log_var), ("noise", noise)] {
        if t.shape() != mu.shape() {
            return Err(NumError::ShapeMismatch {
                context: what.into(),
                expected: mu.shape().to_vec(),
                got: t.shape().to_vec(),
            });
        }
    }
    let half = T::of_f64(0.5);
    let data = mu
        .data()
        .iter()
        .zip(log_var.data())
        .zip(noise.data())
        .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
        .collect();
    Tensor::new(mu.shape().to_vec(), data)
}

/// Draws standard-normal noise of the given shape.
pub fn standard_noise<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("sizes agree")
}

/// One reparameterized latent sample per row of `mu`.
pub fn reparam_sample<R: Rng + ?Sized>(
    mu: &Tensor,
    log_var: &Tensor,
    rng: &mut R,
) -> Result<Tensor, NumError> {
    let noise = standard_noise(mu.shape(), rng);
    reparameterize(mu, log_var, &noise)
}

/// Per-element mean squared error, averaged over the batch.
pub fn recon_loss<T: Real>(x: &Tensor<T>, recon: &Tensor<T>) -> Result<f64, NumError> {
    if x.shape() != recon.shape() {
        return Err(NumError::ShapeMismatch {
            context: "reconstruction".into(),
            expected: x.shape().to_vec(),
            got: recon.shape().to_vec(),
        });
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(recon.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    Ok(sum / x.len().max(1) as f64)
}

/// KL divergence from `N(mu, exp(log_var))` to `N(0, 1)`, averaged over dims and batch.
pub fn kl_loss<T: Real>(mu: &Tensor<T>, log_var: &Tensor<T>) -> Result<f64, NumError> {
    if mu.shape() != log_var.shape() {
        return Err(NumError::ShapeMismatch {
            context: "log_var".into(),
            expected: mu.shape().to_vec(),
            got: log_var.shape().to_vec(),
        });
    }
    let sum: f64 = mu
        .data()
        .iter()
        .zip(log_var.data())
        .map(|(&m, &lv)| kl_term(m.as_f64(), lv.as_f64()))
        .sum();
    Ok(sum / mu.len().max(1) as f64)
}

/// `0.5 (mu^2 + sigma^2 - log sigma^2 - 1)` for one dimension.
pub fn kl_term(mu: f64, log_var: f64) -> f64 {
    0.5 * (mu * mu + log_var.exp() - log_var - 1.0)
}

pub fn total_loss<T: Real>(
    x: &Tensor<T>,
    recon: &Tensor<T>,
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    kl_weight: f64,
) -> Result<VaeLossParts, NumError> {
    if kl_weight < 0.0 {
        return Err(NumError::Config("kl_weight must be non-negative".into()));
    }
    let loss_r = recon_loss(x, recon)?;
    let loss_c = kl_loss(mu, log_var)?;
    Ok(VaeLossParts {
        loss_r,
        loss_c,
        loss: loss_r + kl_weight * loss_c,
    })
}

/// Stacks observations into a `[n, 3, 48, 64]` batch.
pub fn observations_to_batch<'a, I>(obs: I) -> Tensor
where
    I: IntoIterator<Item = &'a Observation>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for o in obs {
        data.extend(o.to_chw());
        n += 1;
    }
    Tensor::new(vec![n, OBS_CHANNELS, OBS_HEIGHT, OBS_WIDTH], data).expect("sizes agree")
}

/// Deterministic planner feature: the posterior mean of one observation.
pub fn latent_for_planner(
    model: &VaeModel,
    params: &VaeParams,
    obs: &Observation,
) -> Result<Vec<f32>, NumError> {
    let x = observations_to_batch([obs]);
    let (mu, _) = model.encode(params, &x)?;
    Ok(mu.into_data())
}
