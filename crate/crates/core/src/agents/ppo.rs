use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mazeenv::AgentAction;
use crate::numcore::{
    bias_name, clip_global_norm, weight_name, AdamConfig, AdamState, Network, ParamStore, Tensor,
};

use super::state::{batch_states, PlannerState};
use super::AgentError;

const LOG_STD: &str = "log_std";
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub rollout_len: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f32,
    pub clip_norm: f32,
    /// Initial policy std of `(v, w)`, as a log.
    pub init_log_std: [f32; 2],
    /// Initial policy mean of `(v, w)`.
    pub init_mean: [f32; 2],
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_epsilon: 0.2,
            epochs: 4,
            rollout_len: 2048,
            minibatch: 64,
            value_coef: 0.5,
            entropy_coef: 0.0,
            lr: 3e-4,
            clip_norm: 10.0,
            init_log_std: [(0.15f32).ln(), (0.4f32).ln()],
            init_mean: [0.25, 0.0],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(AgentError::Config("ppo clip_epsilon must be in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(AgentError::Config(
                "ppo lambda must be in [0, 1] and gamma in (0, 1]".into(),
            ));
        }
        if self.epochs == 0 || self.rollout_len == 0 || self.minibatch == 0 {
            return Err(AgentError::Config(
                "ppo epochs, rollout_len and minibatch must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(x: &[f32], mean: &[f32], log_std: &[f32]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&x, &m), &ls)| {
            let z = (x as f64 - m as f64) / (ls as f64).exp();
            -0.5 * z * z - ls as f64 - HALF_LN_2PI
        })
        .sum()
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to `log(ratio)`.
fn surrogate_grad(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = (advantage >= 0.0 && ratio > 1.0 + epsilon)
        || (advantage < 0.0 && ratio < 1.0 - epsilon);
    if clipped {
        0.0
    } else {
        ratio * advantage
    }
}

/// Generalized advantage estimates and returns.
///
/// `next_values[t]` is the value of the state after step `t`. `terminals` mark
/// absorbing ends (no bootstrap); `dones` mark any episode end, terminal or not.
pub fn compute_gae(
    rewards: &[f32],
    values: &[f32],
    next_values: &[f32],
    terminals: &[bool],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f32>, Vec<f32>) {
    let n = rewards.len();
    assert!(
        values.len() == n && next_values.len() == n && terminals.len() == n && dones.len() == n,
        "rollout columns must have equal length"
    );
    let mut adv = vec![0.0f32; n];
    let mut next_adv = 0.0f64;
    for t in (0..n).rev() {
        let bootstrap = if terminals[t] { 0.0 } else { gamma * next_values[t] as f64 };
        let delta = rewards[t] as f64 + bootstrap - values[t] as f64;
        let carry = if dones[t] { 0.0 } else { gamma * lambda * next_adv };
        next_adv = delta + carry;
        adv[t] = next_adv as f32;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit std.
pub fn normalize_advantages(adv: &[f32]) -> Vec<f32> {
    let n = adv.len().max(1) as f64;
    let mean = adv.iter().map(|&a| a as f64).sum::<f64>() / n;
    let var = adv.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter().map(|&a| ((a as f64 - mean) / std) as f32).collect()
}

/// On-policy trajectory segment.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub states: Vec<PlannerState>,
    /// Pre-clamp sampled actions.
    pub actions: Vec<[f32; 2]>,
    pub log_probs: Vec<f32>,
    pub rewards: Vec<f32>,
    pub values: Vec<f32>,
    pub terminals: Vec<bool>,
    pub dones: Vec<bool>,
    /// Value of the final observation of episodes cut by a time limit, else 0.
    pub bootstrap: Vec<f32>,
    /// Value of the state following the last step when that step did not end an episode.
    pub last_value: f32,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        state: PlannerState,
        action: [f32; 2],
        log_prob: f32,
        reward: f32,
        value: f32,
        terminal: bool,
        done: bool,
        bootstrap: f32,
    ) {
        self.states.push(state);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.terminals.push(terminal);
        self.dones.push(done);
        self.bootstrap.push(bootstrap);
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn next_values(&self) -> Vec<f32> {
        let n = self.len();
        (0..n)
            .map(|t| {
                if self.dones[t] {
                    self.bootstrap[t]
                } else if t + 1 < n {
                    self.values[t + 1]
                } else {
                    self.last_value
                }
            })
            .collect()
    }

    pub fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f32>, Vec<f32>) {
        compute_gae(
            &self.rewards,
            &self.values,
            &self.next_values(),
            &self.terminals,
            &self.dones,
            gamma,
            lambda,
        )
    }
}

/// Sampled action with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    /// Clamped action to execute.
    pub action: AgentAction,
    /// Pre-clamp sample.
    pub raw: [f32; 2],
    pub log_prob: f64,
    pub mean: [f32; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub updates: usize,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Minibatch objective parts; `objective = surrogate - value_coef * value_loss + entropy_coef * entropy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLoss {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub policy_net: Network,
    pub value_net: Network,
    /// Policy network parameters plus the `log_std` entry.
    pub policy: ParamStore,
    pub value: ParamStore,
    pub adam_policy: AdamState,
    pub adam_value: AdamState,
    pub cfg: PpoConfig,
    pub v_max: f64,
    pub w_max: f64,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(
        policy_net: Network,
        value_net: Network,
        cfg: PpoConfig,
        v_max: f64,
        w_max: f64,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut policy = policy_net.init_params(rng);
        let last = policy_net.layers().len() - 1;
        policy
            .get_mut(&weight_name(last))?
            .data_mut()
            .iter_mut()
            .for_each(|w| *w *= 0.01);
        policy
            .get_mut(&bias_name(last))?
            .data_mut()
            .copy_from_slice(&cfg.init_mean);
        policy.insert(LOG_STD, Tensor::from_vec(cfg.init_log_std.to_vec()))?;
        let value = value_net.init_params(rng);
        Ok(Self::from_params(policy_net, value_net, policy, value, cfg, v_max, w_max))
    }

    pub fn from_params(
        policy_net: Network,
        value_net: Network,
        policy: ParamStore,
        value: ParamStore,
        cfg: PpoConfig,
        v_max: f64,
        w_max: f64,
    ) -> Self {
        let adam_policy = AdamState::new(&policy, AdamConfig::with_lr(cfg.lr));
        let adam_value = AdamState::new(&value, AdamConfig::with_lr(cfg.lr));
        Self {
            policy_net,
            value_net,
            policy,
            value,
            adam_policy,
            adam_value,
            cfg,
            v_max,
            w_max,
        }
    }

    pub fn log_std(&self) -> [f32; 2] {
        let d = self.policy.get(LOG_STD).expect("policy store has log_std").data();
        [d[0], d[1]]
    }

    pub fn set_log_std(&mut self, ls: [f32; 2]) {
        self.policy
            .get_mut(LOG_STD)
            .expect("policy store has log_std")
            .data_mut()
            .copy_from_slice(&ls);
    }

    pub fn mean(&self, state: &PlannerState) -> Result<[f32; 2], AgentError> {
        let (x, aux) = batch_states(&[state])?;
        let m = self.policy_net.predict(&self.policy, &x, Some(&aux))?;
        Ok([m.data()[0], m.data()[1]])
    }

    pub fn value_of(&self, state: &PlannerState) -> Result<f32, AgentError> {
        let (x, aux) = batch_states(&[state])?;
        Ok(self.value_net.predict(&self.value, &x, Some(&aux))?.data()[0])
    }

    fn clamp(&self, raw: [f32; 2]) -> AgentAction {
        AgentAction::new(raw[0] as f64, raw[1] as f64).clamped(self.v_max, self.w_max)
    }

    /// Gaussian sample (or the mean when `deterministic`), clamped to the action bounds.
    pub fn policy_sample<R: Rng + ?Sized>(
        &self,
        state: &PlannerState,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<PolicyOutput, AgentError> {
        let mean = self.mean(state)?;
        let ls = self.log_std();
        let raw = if deterministic {
            mean
        } else {
            let mut r = [0.0f32; 2];
            for d in 0..2 {
                let e: f64 = StandardNormal.sample(rng);
                r[d] = (mean[d] as f64 + (ls[d] as f64).exp() * e) as f32;
            }
            r
        };
        Ok(PolicyOutput {
            action: self.clamp(raw),
            raw,
            log_prob: gaussian_log_prob(&raw, &mean, &ls),
            mean,
        })
    }

    /// Objective pieces and gradients (of the negated objective) for one minibatch.
    #[allow(clippy::type_complexity)]
    pub fn minibatch_gradients(
        &self,
        rollout: &Rollout,
        idx: &[usize],
        advantages: &[f32],
        returns: &[f32],
    ) -> Result<(PpoLoss, ParamStore, ParamStore, f64, f64), AgentError> {
        let m = idx.len();
        let states: Vec<&PlannerState> = idx.iter().map(|&i| &rollout.states[i]).collect();
        let (x, aux) = batch_states(&states)?;
        let ls = self.log_std();
        let sigma2 = [(2.0 * ls[0] as f64).exp(), (2.0 * ls[1] as f64).exp()];
        let eps = self.cfg.clip_epsilon;

        let (means, pcache) = self.policy_net.forward(&self.policy, &x, Some(&aux))?;
        let mut dmean = Tensor::zeros(means.shape());
        let mut dls = [0.0f64; 2];
        let mut surrogate = 0.0;
        let mut kl = 0.0;
        let mut clipped = 0usize;
        for (k, &i) in idx.iter().enumerate() {
            let mu = means.item(k);
            let a = rollout.actions[i];
            let logp = gaussian_log_prob(&a, mu, &ls);
            let log_ratio = logp - rollout.log_probs[i] as f64;
            let ratio = log_ratio.exp();
            let adv = advantages[i] as f64;
            surrogate += clipped_surrogate(ratio, adv, eps);
            kl += (ratio - 1.0) - log_ratio;
            if (ratio - 1.0).abs() > eps {
                clipped += 1;
            }
            let g = surrogate_grad(ratio, adv, eps) / m as f64;
            for d in 0..2 {
                let diff = a[d] as f64 - mu[d] as f64;
                dmean.data_mut()[k * 2 + d] = (-g * diff / sigma2[d]) as f32;
                dls[d] -= g * (diff * diff / sigma2[d] - 1.0);
            }
        }
        surrogate /= m as f64;
        let entropy: f64 = ls.iter().map(|&l| l as f64 + HALF_LN_2PI + 0.5).sum();
        for d in dls.iter_mut() {
            *d -= self.cfg.entropy_coef;
        }
        let mut pgrads = self.policy_net.param_gradients(&self.policy, &pcache, &dmean)?;
        pgrads.insert(LOG_STD, Tensor::from_vec(vec![dls[0] as f32, dls[1] as f32]))?;

        let (values, vcache) = self.value_net.forward(&self.value, &x, Some(&aux))?;
        let mut dv = Tensor::zeros(values.shape());
        let mut value_loss = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let diff = values.data()[k] as f64 - returns[i] as f64;
            value_loss += diff * diff;
            dv.data_mut()[k] = (2.0 * self.cfg.value_coef * diff / m as f64) as f32;
        }
        value_loss /= m as f64;
        let vgrads = self.value_net.param_gradients(&self.value, &vcache, &dv)?;

        let loss = PpoLoss {
            surrogate,
            value_loss,
            entropy,
            objective: surrogate - self.cfg.value_coef * value_loss + self.cfg.entropy_coef * entropy,
        };
        Ok((loss, pgrads, vgrads, kl / m as f64, clipped as f64 / m as f64))
    }

    /// K epochs of shuffled minibatch Adam steps on a completed rollout.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        rollout: &Rollout,
        rng: &mut R,
    ) -> Result<PpoStats, AgentError> {
        if rollout.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let (adv, returns) = rollout.advantages(self.cfg.gamma, self.cfg.lambda);
        let adv = normalize_advantages(&adv);
        let mut order: Vec<usize> = (0..rollout.len()).collect();
        let mut stats = PpoStats::default();
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let (loss, mut pg, mut vg, kl, cf) =
                    self.minibatch_gradients(rollout, chunk, &adv, &returns)?;
                clip_global_norm(&mut pg, self.cfg.clip_norm);
                clip_global_norm(&mut vg, self.cfg.clip_norm);
                self.adam_policy.step(&mut self.policy, &pg)?;
                self.adam_value.step(&mut self.value, &vg)?;
                stats.updates += 1;
                stats.policy_objective += loss.surrogate;
                stats.value_loss += loss.value_loss;
                stats.approx_kl += kl;
                stats.clip_fraction += cf;
            }
        }
        let u = stats.updates as f64;
        stats.policy_objective /= u;
        stats.value_loss /= u;
        stats.approx_kl /= u;
        stats.clip_fraction /= u;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_examples() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
    }

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[0.0], &[true], &[true], 0.99, 0.95);
        assert_eq!((a[0], r[0]), (1.0, 1.0));
    }
}
