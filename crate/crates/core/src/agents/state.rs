use std::sync::Arc;

use crate::mazeenv::{AgentAction, Observation, TargetInfo, OBS_CHANNELS, OBS_HEIGHT, OBS_WIDTH};
use crate::numcore::Tensor;

use super::AgentError;

/// Number of scalar features appended to the visual features.
pub const AUX_DIM: usize = 4;

/// Visual part of a planner state.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Raw frame, normalized to `[0, 1]` when batched.
    Pixels(Arc<Observation>),
    /// Latent code of the frame.
    Latent(Arc<[f32]>),
}

impl Features {
    pub fn len(&self) -> usize {
        match self {
            Features::Pixels(_) => OBS_CHANNELS * OBS_HEIGHT * OBS_WIDTH,
            Features::Latent(z) => z.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Visual features plus `[d / diagonal, alpha / pi, v_prev / v_max, w_prev / w_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    pub features: Features,
    pub aux: [f32; AUX_DIM],
}

/// Normalized target and motion scalars.
pub fn scalar_features(
    target: &TargetInfo,
    last_action: AgentAction,
    diagonal: f64,
    v_max: f64,
    w_max: f64,
) -> [f32; AUX_DIM] {
    [
        (target.distance / diagonal).clamp(0.0, 1.0) as f32,
        (target.angle / std::f64::consts::PI).clamp(-1.0, 1.0) as f32,
        (last_action.v / v_max).clamp(-1.0, 1.0) as f32,
        (last_action.w / w_max).clamp(-1.0, 1.0) as f32,
    ]
}

impl PlannerState {
    /// Flat vector: features followed by the scalars.
    pub fn to_vec(&self) -> Vec<f32> {
        let mut v = match &self.features {
            Features::Pixels(o) => o.to_chw(),
            Features::Latent(z) => z.to_vec(),
        };
        v.extend_from_slice(&self.aux);
        v
    }
}

/// Stacks states into `(features, aux)` network inputs.
pub fn batch_states(states: &[&PlannerState]) -> Result<(Tensor, Tensor), AgentError> {
    let first = states.first().ok_or(AgentError::EmptyBatch)?;
    let n = states.len();
    let mut feats = Vec::with_capacity(n * first.features.len());
    let mut aux = Vec::with_capacity(n * AUX_DIM);
    for s in states {
        match (&first.features, &s.features) {
            (Features::Pixels(_), Features::Pixels(o)) => feats.extend(o.to_chw()),
            (Features::Latent(a), Features::Latent(z)) if a.len() == z.len() => {
                feats.extend_from_slice(z)
            }
            _ => return Err(AgentError::MixedFeatures),
        }
        aux.extend_from_slice(&s.aux);
    }
    let shape = match &first.features {
        Features::Pixels(_) => vec![n, OBS_CHANNELS, OBS_HEIGHT, OBS_WIDTH],
        Features::Latent(z) => vec![n, z.len()],
    };
    Ok((
        Tensor::new(shape, feats)?,
        Tensor::new(vec![n, AUX_DIM], aux)?,
    ))
}
