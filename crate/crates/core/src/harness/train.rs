use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::agents::{
    build_decoupled_network, build_e2e_network, scalar_features, DqnAgent, Experience, Features,
    Head, PlannerState, PpoAgent, ReplayBuffer, Rollout,
};
use crate::mazeenv::{
    AgentAction, EnvConfig, MazeMap, NavEnv, Outcome, Pose, StepResult, DISCRETE_ACTIONS,
};
use crate::numcore::{AdamConfig, AdamState, ParamStore};
use crate::vae::{latent_for_planner, VaeModel, VaeParams};

use super::checkpoint::{
    check_shapes, load_checkpoint, save_checkpoint, CheckpointMeta, RngState,
};
use super::config::{load_map, Algo, RunConfig};
use super::metrics::{first_threshold_crossing, EpisodeRecord, MetricsSeries};
use super::HarnessError;

const SUCCESS_WINDOW: usize = 100;

/// Source of the visual part of the planner state.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    Pixels,
    Latent { model: VaeModel, params: VaeParams },
}

#[derive(Debug, Clone)]
pub enum Planner {
    Dqn { agent: DqnAgent, replay: ReplayBuffer },
    Ppo { agent: PpoAgent, rollout: Rollout },
}

/// A planner with its feature pipeline, bound to one map.
#[derive(Debug, Clone)]
pub struct Session {
    pub algo: Algo,
    pub planner: Planner,
    pub features: FeatureSource,
    pub diagonal: f64,
    pub v_max: f64,
    pub w_max: f64,
}

/// Loads a VAE checkpoint written by `train-vae`.
pub fn load_vae(path: &Path) -> Result<(VaeModel, VaeParams), HarnessError> {
    let (store, meta) = load_checkpoint(path)?;
    if meta.algo != "vae" {
        return Err(HarnessError::AlgoMismatch {
            expected: "vae".into(),
            got: meta.algo,
        });
    }
    let model = VaeModel::standard();
    let params = VaeParams::split(&store);
    check_shapes(&model.init_params(&mut ChaCha8Rng::seed_from_u64(0)).merged(), &store)?;
    Ok((model, params))
}

fn ppo_agent(algo: Algo, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<PpoAgent, HarnessError> {
    let (p, v) = nets_for(algo);
    Ok(PpoAgent::new(p, v, cfg.ppo.clone(), cfg.env.v_max, cfg.env.w_max, rng)?)
}

fn nets_for(algo: Algo) -> (crate::numcore::Network, crate::numcore::Network) {
    match algo {
        Algo::E2eDqn => (
            build_e2e_network(Head::Discrete(DISCRETE_ACTIONS.len())),
            build_e2e_network(Head::Value),
        ),
        Algo::E2ePpo => (build_e2e_network(Head::Continuous), build_e2e_network(Head::Value)),
        Algo::VaePpo => (
            build_decoupled_network(crate::vae::LATENT_DIM, Head::Continuous),
            build_decoupled_network(crate::vae::LATENT_DIM, Head::Value),
        ),
    }
}

impl Session {
    pub fn new(cfg: &RunConfig, map: &MazeMap, rng: &mut ChaCha8Rng) -> Result<Self, HarnessError> {
        let features = match cfg.algo {
            Algo::VaePpo => {
                let path = cfg.vae_checkpoint.as_ref().ok_or(HarnessError::MissingVae)?;
                let (model, params) = load_vae(path)?;
                FeatureSource::Latent { model, params }
            }
            _ => FeatureSource::Pixels,
        };
        let planner = match cfg.algo {
            Algo::E2eDqn => Planner::Dqn {
                agent: DqnAgent::new(nets_for(Algo::E2eDqn).0, cfg.dqn.clone(), rng)?,
                replay: ReplayBuffer::new(cfg.dqn.replay_capacity),
            },
            algo => Planner::Ppo {
                agent: ppo_agent(algo, cfg, rng)?,
                rollout: Rollout::default(),
            },
        };
        Ok(Self {
            algo: cfg.algo,
            planner,
            features,
            diagonal: map.diagonal(),
            v_max: cfg.env.v_max,
            w_max: cfg.env.w_max,
        })
    }

    pub fn state(&self, step: &StepResult) -> Result<PlannerState, HarnessError> {
        session_state(&self.features, step, self.diagonal, self.v_max, self.w_max)
    }

    /// Parameters, optimizer moments and (for the latent planner) the encoder, in one store.
    pub fn to_store(&self) -> ParamStore {
        let mut s = ParamStore::new();
        let mut add = |prefix: &str, p: &ParamStore| {
            s.extend(p.prefixed(prefix)).expect("prefixes keep names unique");
        };
        match &self.planner {
            Planner::Dqn { agent, .. } => {
                add("q", &agent.q);
                add("target", &agent.target);
                add("adam.m", &agent.adam.m);
                add("adam.v", &agent.adam.v);
            }
            Planner::Ppo { agent, .. } => {
                add("policy", &agent.policy);
                add("value", &agent.value);
                add("adam_policy.m", &agent.adam_policy.m);
                add("adam_policy.v", &agent.adam_policy.v);
                add("adam_value.m", &agent.adam_value.m);
                add("adam_value.v", &agent.adam_value.v);
            }
        }
        if let FeatureSource::Latent { params, .. } = &self.features {
            add("vae.encoder", &params.encoder);
        }
        s
    }

    fn extra(&self) -> serde_json::Value {
        match &self.planner {
            Planner::Dqn { agent, .. } => json!({
                "adam_t": agent.adam.t,
                "syncs": agent.syncs,
                "updates": agent.updates,
                "dqn": agent.cfg,
            }),
            Planner::Ppo { agent, .. } => json!({
                "adam_policy_t": agent.adam_policy.t,
                "adam_value_t": agent.adam_value.t,
                "ppo": agent.cfg,
                "v_max": agent.v_max,
                "w_max": agent.w_max,
            }),
        }
    }

    /// Rebuilds a session from a planner checkpoint.
    pub fn from_checkpoint(
        store: &ParamStore,
        meta: &CheckpointMeta,
        cfg: &RunConfig,
        map: &MazeMap,
    ) -> Result<Self, HarnessError> {
        let algo: Algo = meta.algo.parse().map_err(|_| HarnessError::AlgoMismatch {
            expected: "e2e-dqn, e2e-ppo or vae-ppo".into(),
            got: meta.algo.clone(),
        })?;
        let mut probe_rng = ChaCha8Rng::seed_from_u64(0);
        let mut probe_cfg = cfg.clone();
        probe_cfg.algo = algo;
        let t = |key: &str| meta.extra.get(key).and_then(|v| v.as_u64()).unwrap_or(0);
        let features = if algo == Algo::VaePpo {
            let model = VaeModel::standard();
            let encoder = store.strip_prefix("vae.encoder");
            check_shapes(&model.encoder.init_params(&mut probe_rng), &encoder)?;
            FeatureSource::Latent {
                params: VaeParams {
                    encoder,
                    decoder: ParamStore::new(),
                },
                model,
            }
        } else {
            FeatureSource::Pixels
        };
        let planner = match algo {
            Algo::E2eDqn => {
                let net = nets_for(algo).0;
                let q = store.strip_prefix("q");
                check_shapes(&net.init_params(&mut probe_rng), &q)?;
                let mut agent = DqnAgent::from_params(net, q, cfg.dqn.clone());
                agent.target = store.strip_prefix("target");
                agent.adam = AdamState {
                    config: AdamConfig::with_lr(cfg.dqn.lr),
                    m: store.strip_prefix("adam.m"),
                    v: store.strip_prefix("adam.v"),
                    t: t("adam_t"),
                };
                agent.syncs = t("syncs");
                agent.updates = t("updates");
                Planner::Dqn {
                    agent,
                    replay: ReplayBuffer::new(cfg.dqn.replay_capacity),
                }
            }
            _ => {
                let fresh = ppo_agent(algo, &probe_cfg, &mut probe_rng)?;
                let policy = store.strip_prefix("policy");
                let value = store.strip_prefix("value");
                check_shapes(&fresh.policy, &policy)?;
                check_shapes(&fresh.value, &value)?;
                let mut agent = PpoAgent::from_params(
                    fresh.policy_net,
                    fresh.value_net,
                    policy,
                    value,
                    cfg.ppo.clone(),
                    cfg.env.v_max,
                    cfg.env.w_max,
                );
                agent.adam_policy.m = store.strip_prefix("adam_policy.m");
                agent.adam_policy.v = store.strip_prefix("adam_policy.v");
                agent.adam_policy.t = t("adam_policy_t");
                agent.adam_value.m = store.strip_prefix("adam_value.m");
                agent.adam_value.v = store.strip_prefix("adam_value.v");
                agent.adam_value.t = t("adam_value_t");
                Planner::Ppo {
                    agent,
                    rollout: Rollout::default(),
                }
            }
        };
        Ok(Self {
            algo,
            planner,
            features,
            diagonal: map.diagonal(),
            v_max: cfg.env.v_max,
            w_max: cfg.env.w_max,
        })
    }
}

/// Mutable training progress shared across episodes.
pub struct Progress {
    pub env_steps: u64,
    pub budget: u64,
    pub learn: bool,
    pub deterministic: bool,
}

/// Runs one episode; returns `None` if the step budget ran out mid-episode.
pub fn run_episode(
    session: &mut Session,
    env: &mut NavEnv,
    rng: &mut ChaCha8Rng,
    progress: &mut Progress,
    episode: usize,
) -> Result<Option<EpisodeRecord>, HarnessError> {
    let step = env.reset()?;
    let mut state = session.state(&step)?;
    let mut trajectory = vec![step.pose];
    let mut total_reward = 0.0;
    loop {
        if progress.env_steps >= progress.budget {
            return Ok(None);
        }
        let next;
        let next_state;
        match &mut session.planner {
            Planner::Dqn { agent, replay } => {
                let eps = if progress.deterministic {
                    0.0
                } else {
                    agent.cfg.epsilon(progress.env_steps)
                };
                let a = agent.act(&state, eps, rng)?;
                let (v, w) = DISCRETE_ACTIONS[a];
                next = env.step(AgentAction::new(v, w))?;
                progress.env_steps += 1;
                next_state = session_state(&session.features, &next, session.diagonal, session.v_max, session.w_max)?;
                if progress.learn {
                    replay.push(Experience {
                        state: state.clone(),
                        action: a,
                        reward: next.reward as f32,
                        next_state: next_state.clone(),
                        terminal: matches!(next.outcome, Outcome::Collision | Outcome::Arrival),
                    });
                    let s = progress.env_steps;
                    if s >= agent.cfg.learning_starts && s.is_multiple_of(agent.cfg.train_every) {
                        let batch = replay.sample(agent.cfg.batch_size, rng);
                        agent.update(&batch)?;
                    }
                    if s.is_multiple_of(agent.cfg.target_sync) {
                        agent.sync_target();
                    }
                }
            }
            Planner::Ppo { agent, rollout } => {
                let out = agent.policy_sample(&state, rng, progress.deterministic)?;
                let value = if progress.learn { agent.value_of(&state)? } else { 0.0 };
                next = env.step(out.action)?;
                progress.env_steps += 1;
                next_state = session_state(&session.features, &next, session.diagonal, session.v_max, session.w_max)?;
                if progress.learn {
                    let done = next.outcome.is_terminal();
                    let terminal = matches!(next.outcome, Outcome::Collision | Outcome::Arrival);
                    let bootstrap = if done && !terminal { agent.value_of(&next_state)? } else { 0.0 };
                    rollout.push(
                        state.clone(),
                        out.raw,
                        out.log_prob as f32,
                        next.reward as f32,
                        value,
                        terminal,
                        done,
                        bootstrap,
                    );
                    if rollout.len() >= agent.cfg.rollout_len {
                        rollout.last_value = if done { 0.0 } else { agent.value_of(&next_state)? };
                        agent.update(rollout, rng)?;
                        rollout.clear();
                    }
                }
            }
        }
        total_reward += next.reward;
        trajectory.push(next.pose);
        if next.outcome.is_terminal() {
            return Ok(Some(EpisodeRecord {
                episode,
                steps: next.step_index,
                cumulative_steps: progress.env_steps,
                total_reward,
                outcome: next.outcome,
                trajectory,
            }));
        }
        state = next_state;
    }
}

fn session_state(
    features: &FeatureSource,
    step: &StepResult,
    diagonal: f64,
    v_max: f64,
    w_max: f64,
) -> Result<PlannerState, HarnessError> {
    let features = match features {
        FeatureSource::Pixels => Features::Pixels(Arc::new(step.observation.clone())),
        FeatureSource::Latent { model, params } => {
            Features::Latent(latent_for_planner(model, params, &step.observation)?.into())
        }
    };
    Ok(PlannerState {
        features,
        aux: scalar_features(&step.target, step.last_action, diagonal, v_max, w_max),
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub series: MetricsSeries,
    pub env_steps: u64,
    /// Cumulative steps at the first full-window threshold crossing.
    pub steps_to_threshold: Option<u64>,
    pub final_checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub target_syncs: u64,
}

/// Environment for a run: the configured map with seeded, separate RNG streams.
pub fn make_env(cfg: &RunConfig, map: Arc<MazeMap>, env_cfg: EnvConfig) -> Result<NavEnv, HarnessError> {
    let mut env = NavEnv::new(map, env_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    env.set_rng(rng);
    Ok(env)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    session: Session,
    env: NavEnv,
    rng: ChaCha8Rng,
    progress: Progress,
    series: MetricsSeries,
}

impl Ctx<'_> {
    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed,
            env_steps: self.progress.env_steps,
            episodes: self.series.len(),
            algo: self.cfg.algo.name().into(),
            rngs: vec![
                ("agent".into(), RngState::capture(&self.rng)),
                ("env".into(), RngState::capture(self.env.rng())),
            ],
            extra: self.session.extra(),
        }
    }

    fn save(&self, path: &Path) -> Result<(), HarnessError> {
        save_checkpoint(&self.session.to_store(), &self.meta(), path)?;
        Ok(())
    }
}

/// Trains one planner per the config, writing metrics and checkpoints to `out_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainReport, HarnessError> {
    train_with(cfg, None, |_, _| {})
}

/// [`train`] with an optional checkpoint to resume from and a per-episode observer
/// receiving each record and the trailing success rate.
pub fn train_with(
    cfg: &RunConfig,
    resume: Option<&Path>,
    mut observer: impl FnMut(&EpisodeRecord, f64),
) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    let map = load_map(&cfg.map)?;
    let env = make_env(cfg, map.clone(), cfg.env.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let session = Session::new(cfg, &map, &mut rng)?;
    let mut ctx = Ctx {
        cfg,
        session,
        env,
        rng,
        progress: Progress {
            env_steps: 0,
            budget: cfg.max_env_steps,
            learn: true,
            deterministic: false,
        },
        series: MetricsSeries::default(),
    };
    if let Some(path) = resume {
        let (store, meta) = load_checkpoint(path)?;
        if meta.algo != cfg.algo.name() {
            return Err(HarnessError::AlgoMismatch {
                expected: cfg.algo.name().into(),
                got: meta.algo,
            });
        }
        ctx.session = Session::from_checkpoint(&store, &meta, cfg, &map)?;
        for (name, state) in &meta.rngs {
            match name.as_str() {
                "agent" => ctx.rng = state.restore()?,
                "env" => ctx.env.set_rng(state.restore()?),
                _ => {}
            }
        }
        ctx.progress.env_steps = meta.env_steps;
        let prior = cfg.out_dir.join("metrics.csv");
        if prior.exists() {
            let mut s = MetricsSeries::load_csv(&prior)?;
            s.records.truncate(meta.episodes);
            ctx.series = s;
        }
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let rolling = cfg.out_dir.join("checkpoint.nvbt");
    let mut steps_to_threshold = None;
    loop {
        let episode = ctx.series.len();
        let Some(record) = run_episode(
            &mut ctx.session,
            &mut ctx.env,
            &mut ctx.rng,
            &mut ctx.progress,
            episode,
        )?
        else {
            break;
        };
        ctx.series.push(record);
        let rate = *ctx.series.success_rates().last().expect("non-empty");
        observer(ctx.series.records.last().expect("non-empty"), rate);
        if cfg.checkpoint_every > 0 && ctx.series.len().is_multiple_of(cfg.checkpoint_every) {
            ctx.save(&rolling)?;
        }
        if steps_to_threshold.is_none() && ctx.series.len() >= SUCCESS_WINDOW && rate >= cfg.success_threshold {
            steps_to_threshold = Some(ctx.progress.env_steps);
            if cfg.early_stop {
                break;
            }
        }
    }
    let metrics_csv = cfg.out_dir.join("metrics.csv");
    ctx.series.save_csv(&metrics_csv)?;
    let final_checkpoint = cfg.out_dir.join("final.nvbt");
    ctx.save(&final_checkpoint)?;
    debug_assert_eq!(
        steps_to_threshold.is_some(),
        first_threshold_crossing(&ctx.series.records, SUCCESS_WINDOW, cfg.success_threshold).is_some()
            || steps_to_threshold.is_some()
    );
    let target_syncs = match &ctx.session.planner {
        Planner::Dqn { agent, .. } => agent.syncs,
        Planner::Ppo { .. } => 0,
    };
    Ok(TrainReport {
        series: ctx.series,
        env_steps: ctx.progress.env_steps,
        steps_to_threshold,
        final_checkpoint,
        metrics_csv,
        target_syncs,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalEpisode {
    pub outcome: Outcome,
    pub steps: usize,
    pub path_length: f64,
    pub trajectory: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub algo: Algo,
    pub success_rate: f64,
    pub episodes: Vec<EvalEpisode>,
}

pub fn path_length(traj: &[Pose]) -> f64 {
    traj.windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum()
}

/// Runs a checkpointed planner for `n` episodes without learning. Deterministic mode
/// uses the greedy/mean action and turns execution noise off.
pub fn evaluate(
    checkpoint: &Path,
    cfg: &RunConfig,
    n: usize,
    deterministic: bool,
) -> Result<EvalReport, HarnessError> {
    let (store, meta) = load_checkpoint(checkpoint)?;
    let map = load_map(&cfg.map)?;
    let mut session = Session::from_checkpoint(&store, &meta, cfg, &map)?;
    let mut env_cfg = cfg.env.clone();
    if deterministic {
        env_cfg.action_noise = 0.0;
    }
    let mut env = make_env(cfg, map, env_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut progress = Progress {
        env_steps: 0,
        budget: u64::MAX,
        learn: false,
        deterministic,
    };
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n {
        let r = run_episode(&mut session, &mut env, &mut rng, &mut progress, i)?
            .expect("unbounded budget");
        episodes.push(EvalEpisode {
            outcome: r.outcome,
            steps: r.steps,
            path_length: path_length(&r.trajectory),
            trajectory: r.trajectory,
        });
    }
    let hits = episodes.iter().filter(|e| e.outcome == Outcome::Arrival).count();
    Ok(EvalReport {
        algo: session.algo,
        success_rate: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        episodes,
    })
}
