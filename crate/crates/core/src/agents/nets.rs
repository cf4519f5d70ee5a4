use crate::mazeenv::{OBS_CHANNELS, OBS_HEIGHT, OBS_WIDTH};
use crate::numcore::{Activation, AuxInput, ConvGeometry, LayerSpec, Network};

use super::state::AUX_DIM;

/// Output head of a planner network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// One Q-value per discrete action.
    Discrete(usize),
    /// Means of `(v, w)`.
    Continuous,
    /// Scalar state value.
    Value,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Discrete(n) => n,
            Head::Continuous => 2,
            Head::Value => 1,
        }
    }
}

/// Three conv layers over the frame, then two dense layers; the target and
/// motion scalars join at the first dense layer.
pub fn build_e2e_network(head: Head) -> Network {
    let relu = Activation::ReLU;
    Network::new(
        vec![OBS_CHANNELS, OBS_HEIGHT, OBS_WIDTH],
        vec![
            LayerSpec::conv(ConvGeometry::new(3, 32, 8, 4, 0), relu),
            LayerSpec::conv(ConvGeometry::new(32, 64, 4, 2, 0), relu),
            LayerSpec::conv(ConvGeometry::new(64, 64, 3, 1, 0), relu),
            LayerSpec::dense(64 * 2 * 4 + AUX_DIM, 512, relu),
            LayerSpec::dense(512, head.outputs(), Activation::Identity),
        ],
        Some(AuxInput {
            dim: AUX_DIM,
            layer: 3,
        }),
    )
    .expect("e2e network is valid")
}

/// Three dense layers over `latent + 4` inputs.
pub fn build_decoupled_network(latent: usize, head: Head) -> Network {
    let relu = Activation::ReLU;
    Network::new(
        vec![latent],
        vec![
            LayerSpec::dense(latent + AUX_DIM, 256, relu),
            LayerSpec::dense(256, 128, relu),
            LayerSpec::dense(128, head.outputs(), Activation::Identity),
        ],
        Some(AuxInput {
            dim: AUX_DIM,
            layer: 0,
        }),
    )
    .expect("decoupled network is valid")
}
