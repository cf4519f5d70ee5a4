use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{DqnConfig, PpoConfig};
use crate::mazeenv::{EnvConfig, MazeMap, Pose};
use crate::vae::VaeTrainConfig;

use super::HarnessError;

/// Maps shipped with the crate, by name.
pub const BUILTIN_MAPS: [(&str, &str); 3] = [
    ("maze1", include_str!("../../maps/maze1.map")),
    ("maze2", include_str!("../../maps/maze2.map")),
    ("corridor", include_str!("../../maps/corridor.map")),
];

/// Loads a builtin map by name, or a map file by path.
pub fn load_map(name_or_path: &str) -> Result<Arc<MazeMap>, HarnessError> {
    let text = match BUILTIN_MAPS.iter().find(|(n, _)| *n == name_or_path) {
        Some((_, t)) => t.to_string(),
        None => std::fs::read_to_string(name_or_path).map_err(|e| {
            HarnessError::Usage(format!(
                "map {name_or_path:?} is neither a builtin ({}) nor a readable file: {e}",
                BUILTIN_MAPS.map(|(n, _)| n).join(", ")
            ))
        })?,
    };
    Ok(Arc::new(MazeMap::parse(&text)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "e2e-dqn")]
    E2eDqn,
    #[serde(rename = "e2e-ppo")]
    E2ePpo,
    #[serde(rename = "vae-ppo")]
    VaePpo,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::E2eDqn, Algo::E2ePpo, Algo::VaePpo];

    pub fn name(self) -> &'static str {
        match self {
            Algo::E2eDqn => "e2e-dqn",
            Algo::E2ePpo => "e2e-ppo",
            Algo::VaePpo => "vae-ppo",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algo {s:?}; expected one of e2e-dqn, e2e-ppo, vae-ppo"))
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algo: Algo,
    pub map: String,
    pub env: EnvConfig,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
    pub vae: VaeTrainConfig,
    pub vae_checkpoint: Option<PathBuf>,
    pub max_env_steps: u64,
    pub success_threshold: f64,
    /// Stop once the trailing success rate reaches the threshold.
    pub early_stop: bool,
    pub checkpoint_every: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Frames gathered by `collect-frames`.
    pub frames: usize,
    pub eval_episodes: usize,
    /// Poses written by `render`.
    pub render_poses: Vec<(f64, f64, f64)>,
    pub bench_algos: Vec<Algo>,
    pub bench_maps: Vec<String>,
    pub bench_seeds: Vec<u64>,
    /// `map=path` pairs of trained VAE checkpoints for benchmark runs.
    pub bench_vae: Vec<(String, PathBuf)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algo: Algo::VaePpo,
            map: "maze1".into(),
            env: EnvConfig::default(),
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
            vae: VaeTrainConfig::default(),
            vae_checkpoint: None,
            max_env_steps: 300_000,
            success_threshold: 0.8,
            early_stop: true,
            checkpoint_every: 50,
            seed: 0,
            out_dir: PathBuf::from("out"),
            frames: 20_000,
            eval_episodes: 10,
            render_poses: Vec::new(),
            bench_algos: Algo::ALL.to_vec(),
            bench_maps: vec!["maze1".into(), "maze2".into()],
            bench_seeds: vec![0, 1, 2],
            bench_vae: Vec::new(),
        }
    }
}

/// Every key accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "algo",
    "map",
    "seed",
    "out",
    "max_env_steps",
    "success_threshold",
    "early_stop",
    "checkpoint_every",
    "vae_checkpoint",
    "frames",
    "eval_episodes",
    "render.poses",
    "bench.algos",
    "bench.maps",
    "bench.seeds",
    "bench.vae",
    "env.dt",
    "env.substeps",
    "env.max_episode_steps",
    "env.robot_radius",
    "env.action_noise",
    "env.v_max",
    "env.w_max",
    "env.fov",
    "env.random_start",
    "reward.r_arrival",
    "reward.r_collision",
    "reward.c_d",
    "reward.c_r",
    "reward.c_p",
    "dqn.gamma",
    "dqn.lr",
    "dqn.batch_size",
    "dqn.replay_capacity",
    "dqn.target_sync",
    "dqn.epsilon_start",
    "dqn.epsilon_end",
    "dqn.epsilon_decay_steps",
    "dqn.clip_norm",
    "dqn.learning_starts",
    "dqn.train_every",
    "ppo.gamma",
    "ppo.lambda",
    "ppo.clip_epsilon",
    "ppo.epochs",
    "ppo.rollout_len",
    "ppo.minibatch",
    "ppo.value_coef",
    "ppo.entropy_coef",
    "ppo.lr",
    "ppo.clip_norm",
    "ppo.init_std_v",
    "ppo.init_std_w",
    "ppo.init_mean_v",
    "vae.epochs",
    "vae.batch_size",
    "vae.lr",
    "vae.kl_weight",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| HarnessError::Usage(format!("bad value {value:?} for {key}: {e}")))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let v = value.trim();
        match key {
            "algo" => self.algo = v.parse().map_err(HarnessError::Usage)?,
            "map" => self.map = v.to_string(),
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out_dir = PathBuf::from(v),
            "max_env_steps" => self.max_env_steps = parse(key, v)?,
            "success_threshold" => self.success_threshold = parse(key, v)?,
            "early_stop" => self.early_stop = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "vae_checkpoint" => self.vae_checkpoint = Some(PathBuf::from(v)),
            "frames" => self.frames = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "render.poses" => {
                self.render_poses = v
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|p| {
                        let xs: Vec<f64> = list(p).map(|x| parse(key, x)).collect::<Result<_, _>>()?;
                        match xs[..] {
                            [x, y, h] => Ok((x, y, h)),
                            _ => Err(HarnessError::Usage(format!(
                                "render.poses entries are `x, y, heading`; got {p:?}"
                            ))),
                        }
                    })
                    .collect::<Result<_, _>>()?
            }
            "bench.algos" => {
                self.bench_algos = list(v)
                    .map(|a| a.parse().map_err(HarnessError::Usage))
                    .collect::<Result<_, _>>()?
            }
            "bench.maps" => self.bench_maps = list(v).map(str::to_string).collect(),
            "bench.seeds" => {
                self.bench_seeds = list(v).map(|s| parse(key, s)).collect::<Result<_, _>>()?
            }
            "bench.vae" => {
                self.bench_vae = list(v)
                    .map(|pair| {
                        pair.split_once('=')
                            .map(|(m, p)| (m.trim().to_string(), PathBuf::from(p.trim())))
                            .ok_or_else(|| {
                                HarnessError::Usage(format!("bench.vae entries are map=path; got {pair:?}"))
                            })
                    })
                    .collect::<Result<_, _>>()?
            }
            "env.dt" => self.env.dt = parse(key, v)?,
            "env.substeps" => self.env.substeps = parse(key, v)?,
            "env.max_episode_steps" => self.env.max_episode_steps = parse(key, v)?,
            "env.robot_radius" => self.env.robot_radius = parse(key, v)?,
            "env.action_noise" => self.env.action_noise = parse(key, v)?,
            "env.v_max" => self.env.v_max = parse(key, v)?,
            "env.w_max" => self.env.w_max = parse(key, v)?,
            "env.fov" => self.env.fov = parse(key, v)?,
            "env.random_start" => self.env.random_start = parse(key, v)?,
            "reward.r_arrival" => self.env.reward.r_arrival = parse(key, v)?,
            "reward.r_collision" => self.env.reward.r_collision = parse(key, v)?,
            "reward.c_d" => self.env.reward.c_d = parse(key, v)?,
            "reward.c_r" => self.env.reward.c_r = parse(key, v)?,
            "reward.c_p" => self.env.reward.c_p = parse(key, v)?,
            "dqn.gamma" => self.dqn.gamma = parse(key, v)?,
            "dqn.lr" => self.dqn.lr = parse(key, v)?,
            "dqn.batch_size" => self.dqn.batch_size = parse(key, v)?,
            "dqn.replay_capacity" => self.dqn.replay_capacity = parse(key, v)?,
            "dqn.target_sync" => self.dqn.target_sync = parse(key, v)?,
            "dqn.epsilon_start" => self.dqn.epsilon_start = parse(key, v)?,
            "dqn.epsilon_end" => self.dqn.epsilon_end = parse(key, v)?,
            "dqn.epsilon_decay_steps" => self.dqn.epsilon_decay_steps = parse(key, v)?,
            "dqn.clip_norm" => self.dqn.clip_norm = parse(key, v)?,
            "dqn.learning_starts" => self.dqn.learning_starts = parse(key, v)?,
            "dqn.train_every" => self.dqn.train_every = parse(key, v)?,
            "ppo.gamma" => self.ppo.gamma = parse(key, v)?,
            "ppo.lambda" => self.ppo.lambda = parse(key, v)?,
            "ppo.clip_epsilon" => self.ppo.clip_epsilon = parse(key, v)?,
            "ppo.epochs" => self.ppo.epochs = parse(key, v)?,
            "ppo.rollout_len" => self.ppo.rollout_len = parse(key, v)?,
            "ppo.minibatch" => self.ppo.minibatch = parse(key, v)?,
            "ppo.value_coef" => self.ppo.value_coef = parse(key, v)?,
            "ppo.entropy_coef" => self.ppo.entropy_coef = parse(key, v)?,
            "ppo.lr" => self.ppo.lr = parse(key, v)?,
            "ppo.clip_norm" => self.ppo.clip_norm = parse(key, v)?,
            "ppo.init_std_v" => self.ppo.init_log_std[0] = parse::<f32>(key, v)?.ln(),
            "ppo.init_std_w" => self.ppo.init_log_std[1] = parse::<f32>(key, v)?.ln(),
            "ppo.init_mean_v" => self.ppo.init_mean[0] = parse(key, v)?,
            "vae.epochs" => self.vae.epochs = parse(key, v)?,
            "vae.batch_size" => self.vae.batch_size = parse(key, v)?,
            "vae.lr" => self.vae.lr = parse(key, v)?,
            "vae.kl_weight" => self.vae.kl_weight = parse(key, v)?,
            _ => {
                return Err(HarnessError::Usage(format!(
                    "unknown config key {key:?}; valid keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a line-oriented `key = value` text with `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                HarnessError::Usage(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        self.dqn.validate()?;
        self.ppo.validate()?;
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(HarnessError::Usage("success_threshold must be in (0, 1]".into()));
        }
        if self.max_env_steps == 0 {
            return Err(HarnessError::Usage("max_env_steps must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&json))
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.render_poses
            .iter()
            .map(|&(x, y, h)| Pose::new(x, y, h))
            .collect()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_comments() {
        let c = RunConfig::from_text(
            "# header\nalgo = e2e-ppo\nppo.clip_epsilon = 0.1 # tighter\nreward.r_arrival = 5\n",
        )
        .unwrap();
        assert_eq!(c.algo, Algo::E2ePpo);
        assert_eq!(c.ppo.clip_epsilon, 0.1);
        assert_eq!(c.env.reward.r_arrival, 5.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_text("ppo.clip_epsilonn = 0.2").unwrap_err();
        assert!(e.to_string().contains("ppo.clip_epsilonn"));
    }

    #[test]
    fn every_listed_key_is_accepted() {
        for key in CONFIG_KEYS {
            let mut c = RunConfig::default();
            let value = match *key {
                "algo" => "e2e-dqn",
                "render.poses" => "1, 2, 0",
                "bench.algos" => "vae-ppo",
                "bench.vae" => "maze1=v.nvbt",
                "map" | "out" | "vae_checkpoint" | "bench.maps" => "x",
                "env.random_start" | "early_stop" => "true",
                _ => "1",
            };
            c.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn builtin_maps_parse() {
        for (name, _) in BUILTIN_MAPS {
            load_map(name).unwrap();
        }
    }
}
