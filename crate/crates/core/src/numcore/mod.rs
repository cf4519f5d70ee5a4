//! Minimal tensor and neural-network core: conv / transposed conv / dense
//! layers with hand-written backward passes, Adam, gradient clipping and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
mod layers;
mod network;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{
    check_store_gradients, grad_check, grad_check_with, relative_error, GradReport, LinearLoss, MseLoss, ScalarLoss,
};
pub use layers::{Activation, ConvGeometry, LayerKind, LayerSpec};
pub use network::{bias_name, weight_name, AuxInput, ForwardCache, Gradients, Network};
pub use params::{clip_global_norm, ParamStore};
pub use tensor::{Real, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{context}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("layer {layer} ({kind}) cannot take input of shape {input:?}")]
    LayerShape {
        layer: usize,
        kind: String,
        input: Vec<usize>,
    },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("duplicate parameter {0}")]
    DuplicateParam(String),
    #[error("parameter stores differ: {0}")]
    StoreMismatch(String),
    #[error("forward cache does not match network: {0}")]
    CacheMismatch(String),
    #[error("{0}")]
    Config(String),
}
