use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{clip_global_norm, AdamConfig, AdamState, Network, ParamStore, Tensor};

use super::replay::Experience;
use super::state::{batch_states, PlannerState};
use super::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f32,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Environment steps between target syncs.
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub clip_norm: f32,
    /// Environment steps collected before the first update.
    pub learning_starts: u64,
    /// Environment steps per gradient update.
    pub train_every: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-4,
            batch_size: 64,
            replay_capacity: 50_000,
            target_sync: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50_000,
            clip_norm: 10.0,
            learning_starts: 1000,
            train_every: 4,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(AgentError::Config("dqn gamma must be in (0, 1)".into()));
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(AgentError::Config("dqn epsilon must be in [0, 1]".into()));
            }
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_sync == 0 {
            return Err(AgentError::Config(
                "dqn batch_size, replay_capacity and target_sync must be positive".into(),
            ));
        }
        if self.train_every == 0 || !(self.clip_norm > 0.0) {
            return Err(AgentError::Config(
                "dqn train_every and clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Linear anneal from `epsilon_start` to `epsilon_end`.
    pub fn epsilon(&self, step: u64) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let f = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(q: &[f32]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in q.iter().enumerate() {
        match best {
            Some(b) if q[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Random index with probability `epsilon`, otherwise the greedy one.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    q: &[f32],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    if q.is_empty() {
        return Err(AgentError::EmptyQ);
    }
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..q.len()))
    } else {
        Ok(argmax(q).expect("non-empty"))
    }
}

/// Double-DQN targets: the online network picks the next action, the target network scores it.
pub fn dqn_targets(
    net: &Network,
    online: &ParamStore,
    target: &ParamStore,
    batch: &[&Experience],
    gamma: f64,
) -> Result<Vec<f32>, AgentError> {
    let next: Vec<&PlannerState> = batch.iter().map(|e| &e.next_state).collect();
    let (x, aux) = batch_states(&next)?;
    let q_online = net.predict(online, &x, Some(&aux))?;
    let q_target = net.predict(target, &x, Some(&aux))?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.terminal {
                e.reward
            } else {
                let a = argmax(q_online.item(i)).expect("non-empty head");
                (e.reward as f64 + gamma * q_target.item(i)[a] as f64) as f32
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub net: Network,
    pub q: ParamStore,
    pub target: ParamStore,
    pub adam: AdamState,
    pub cfg: DqnConfig,
    pub syncs: u64,
    pub updates: u64,
}

/// Diagnostics of one gradient update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnUpdate {
    pub loss: f64,
    pub grad_norm: f64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(net: Network, cfg: DqnConfig, rng: &mut R) -> Result<Self, AgentError> {
        cfg.validate()?;
        let q = net.init_params(rng);
        Ok(Self::from_params(net, q, cfg))
    }

    pub fn from_params(net: Network, q: ParamStore, cfg: DqnConfig) -> Self {
        let adam = AdamState::new(&q, AdamConfig::with_lr(cfg.lr));
        Self {
            target: q.clone(),
            net,
            q,
            adam,
            cfg,
            syncs: 0,
            updates: 0,
        }
    }

    pub fn q_values(&self, state: &PlannerState) -> Result<Vec<f32>, AgentError> {
        let (x, aux) = batch_states(&[state])?;
        Ok(self.net.predict(&self.q, &x, Some(&aux))?.into_data())
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &PlannerState,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize, AgentError> {
        epsilon_greedy(&self.q_values(state)?, epsilon, rng)
    }

    /// Copies the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.q.clone();
        self.syncs += 1;
    }

    /// Mean squared td-error over a batch and its gradient with respect to the
    /// online parameters. Targets are computed first and held fixed.
    pub fn loss_and_gradients(&self, batch: &[&Experience]) -> Result<(f64, ParamStore), AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let y = dqn_targets(&self.net, &self.q, &self.target, batch, self.cfg.gamma)?;
        let states: Vec<&PlannerState> = batch.iter().map(|e| &e.state).collect();
        let (x, aux) = batch_states(&states)?;
        let (q, cache) = self.net.forward(&self.q, &x, Some(&aux))?;
        let n = batch.len();
        let mut dout = Tensor::zeros(q.shape());
        let width = q.item_len();
        let mut loss = 0.0f64;
        for (i, e) in batch.iter().enumerate() {
            let delta = q.item(i)[e.action] - y[i];
            loss += (delta as f64).powi(2);
            dout.data_mut()[i * width + e.action] = 2.0 * delta / n as f32;
        }
        loss /= n as f64;
        Ok((loss, self.net.param_gradients(&self.q, &cache, &dout)?))
    }

    /// One clipped Adam step on the batch's td-error.
    pub fn update(&mut self, batch: &[&Experience]) -> Result<DqnUpdate, AgentError> {
        let (loss, mut grads) = self.loss_and_gradients(batch)?;
        let grad_norm = clip_global_norm(&mut grads, self.cfg.clip_norm);
        self.adam.step(&mut self.q, &grads)?;
        self.updates += 1;
        Ok(DqnUpdate { loss, grad_norm })
    }
}
