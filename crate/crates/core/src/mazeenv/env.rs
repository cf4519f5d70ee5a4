use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kinematics::{integrate, wrap_angle, AgentAction, Pose};
use super::map::MazeMap;
use super::render::{render, Camera, Observation};

/// Goal distance and bearing in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetInfo {
    pub distance: f64,
    /// Bearing in `(-pi, pi]`, positive to the left.
    pub angle: f64,
}

pub fn target_polar(pose: Pose, goal: (f64, f64)) -> TargetInfo {
    let (dx, dy) = (goal.0 - pose.x, goal.1 - pose.y);
    let distance = dx.hypot(dy);
    if distance == 0.0 {
        return TargetInfo {
            distance: 0.0,
            angle: 0.0,
        };
    }
    TargetInfo {
        distance,
        angle: wrap_angle(dy.atan2(dx) - pose.heading),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub r_arrival: f64,
    pub r_collision: f64,
    /// Arrival radius in meters.
    pub c_d: f64,
    /// Progress gain per meter.
    pub c_r: f64,
    /// Per-step time penalty.
    pub c_p: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_arrival: 10.0,
            r_collision: -10.0,
            c_d: 0.3,
            c_r: 10.0,
            c_p: 0.05,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.r_arrival > 0.0 && self.r_collision < 0.0) {
            return Err(EnvError::Config("need r_arrival > 0 > r_collision".into()));
        }
        if !(self.c_d > 0.0 && self.c_r > 0.0 && self.c_p >= 0.0) {
            return Err(EnvError::Config("need c_d > 0, c_r > 0, c_p >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Collision,
    Arrival,
    Timeout,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Running
    }
}

/// Reward for one transition. Collision wins over arrival, arrival over progress.
pub fn compute_reward(d_prev: f64, d_now: f64, collided: bool, cfg: &RewardConfig) -> f64 {
    if collided {
        cfg.r_collision
    } else if d_now < cfg.c_d {
        cfg.r_arrival
    } else {
        cfg.c_r * (d_prev - d_now) - cfg.c_p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub dt: f64,
    pub substeps: usize,
    pub max_episode_steps: usize,
    pub robot_radius: f64,
    /// Action noise std as a fraction of each action's range.
    pub action_noise: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub fov: f64,
    pub random_start: bool,
    pub seed: u64,
    pub reward: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            substeps: 4,
            max_episode_steps: 500,
            robot_radius: 0.15,
            action_noise: 0.05,
            v_max: 0.5,
            w_max: 1.0,
            fov: 1.3,
            random_start: false,
            seed: 0,
            reward: RewardConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.dt > 0.0) {
            return Err(EnvError::Config("dt must be positive".into()));
        }
        if self.substeps == 0 || self.max_episode_steps == 0 {
            return Err(EnvError::Config(
                "substeps and max_episode_steps must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.action_noise) {
            return Err(EnvError::Config("action_noise must be in [0, 1)".into()));
        }
        if !(self.robot_radius > 0.0 && self.v_max > 0.0 && self.w_max > 0.0 && self.fov > 0.0) {
            return Err(EnvError::Config(
                "robot_radius, v_max, w_max and fov must be positive".into(),
            ));
        }
        self.reward.validate()
    }
}

/// Fixed action set for discrete-action agents, as `(v, w)`.
pub const DISCRETE_ACTIONS: [(f64, f64); 5] = [
    (0.3, 0.0),
    (0.3, 0.6),
    (0.3, -0.6),
    (0.15, 1.2),
    (0.15, -1.2),
];

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub target: TargetInfo,
    pub reward: f64,
    pub outcome: Outcome,
    pub step_index: usize,
    /// Commanded action that produced this result (zero after reset).
    pub last_action: AgentAction,
    pub pose: Pose,
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("step called before reset")]
    NotReset,
    #[error("start cell ({0}, {1}) collides with a wall at the configured radius")]
    BadStart(usize, usize),
    #[error("no collision-free spawn point found")]
    NoSpawn,
    #[error(transparent)]
    Ray(#[from] super::raycast::RayError),
}

/// Gym-style maze environment owning its own RNG stream.
#[derive(Debug, Clone)]
pub struct NavEnv {
    map: Arc<MazeMap>,
    cfg: EnvConfig,
    camera: Camera,
    rng: ChaCha8Rng,
    pose: Pose,
    last_action: AgentAction,
    step_index: usize,
    d_prev: f64,
    outcome: Option<Outcome>,
}

impl NavEnv {
    pub fn new(map: Arc<MazeMap>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        for &cell in map.start_cells() {
            let (x, y) = map.cell_center(cell);
            if map.disc_hits_wall(x, y, cfg.robot_radius) {
                return Err(EnvError::BadStart(cell.0, cell.1));
            }
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            camera: Camera { fov: cfg.fov },
            map,
            cfg,
            pose: Pose::default(),
            last_action: AgentAction::default(),
            step_index: 0,
            d_prev: 0.0,
            outcome: None,
        })
    }

    pub fn map(&self) -> &Arc<MazeMap> {
        &self.map
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn set_random_start(&mut self, on: bool) {
        self.cfg.random_start = on;
    }

    /// Starts an episode at a start cell; random cell and heading when `random_start`.
    pub fn reset(&mut self) -> Result<StepResult, EnvError> {
        let starts = self.map.start_cells();
        let (cell, heading) = if self.cfg.random_start {
            let i = self.rng.random_range(0..starts.len());
            let h = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            (starts[i], h)
        } else {
            (starts[0], 0.0)
        };
        let (x, y) = self.map.cell_center(cell);
        self.begin(Pose::new(x, y, heading))
    }

    /// Starts an episode at a uniformly random collision-free point of any free cell.
    pub fn reset_anywhere(&mut self) -> Result<StepResult, EnvError> {
        let free = self.map.free_cells();
        let cs = self.map.cell_size;
        for _ in 0..10_000 {
            let (c, r) = free[self.rng.random_range(0..free.len())];
            let x = (c as f64 + self.rng.random_range(0.0..1.0)) * cs;
            let y = (r as f64 + self.rng.random_range(0.0..1.0)) * cs;
            let h = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            if !self.map.disc_hits_wall(x, y, self.cfg.robot_radius) {
                return self.begin(Pose::new(x, y, h));
            }
        }
        Err(EnvError::NoSpawn)
    }

    /// Starts an episode at an explicit pose.
    pub fn reset_to(&mut self, pose: Pose) -> Result<StepResult, EnvError> {
        self.begin(pose)
    }

    fn begin(&mut self, pose: Pose) -> Result<StepResult, EnvError> {
        self.pose = pose;
        self.last_action = AgentAction::default();
        self.step_index = 0;
        self.outcome = Some(Outcome::Running);
        let target = target_polar(pose, self.map.goal_point());
        self.d_prev = target.distance;
        Ok(StepResult {
            observation: render(&self.map, pose, &self.camera)?,
            target,
            reward: 0.0,
            outcome: Outcome::Running,
            step_index: 0,
            last_action: self.last_action,
            pose,
        })
    }

    /// Current view without advancing the episode.
    pub fn observe(&self) -> Result<Observation, EnvError> {
        Ok(render(&self.map, self.pose, &self.camera)?)
    }

    pub fn step(&mut self, action: AgentAction) -> Result<StepResult, EnvError> {
        match self.outcome {
            None => return Err(EnvError::NotReset),
            Some(o) if o.is_terminal() => return Err(EnvError::EpisodeOver),
            _ => {}
        }
        let cfg = &self.cfg;
        let commanded = action.clamped(cfg.v_max, cfg.w_max);
        let mut executed = commanded;
        if cfg.action_noise > 0.0 {
            let nv = Normal::new(0.0, cfg.action_noise * cfg.v_max).expect("finite std");
            let nw = Normal::new(0.0, cfg.action_noise * 2.0 * cfg.w_max).expect("finite std");
            executed.v += nv.sample(&mut self.rng);
            executed.w += nw.sample(&mut self.rng);
            executed = executed.clamped(cfg.v_max, cfg.w_max);
        }

        let h = cfg.dt / cfg.substeps as f64;
        let mut collided = false;
        for _ in 0..cfg.substeps {
            let next = integrate(self.pose, executed, h);
            if self.map.disc_hits_wall(next.x, next.y, cfg.robot_radius) {
                collided = true;
                break;
            }
            self.pose = next;
        }

        self.step_index += 1;
        self.last_action = commanded;
        let target = target_polar(self.pose, self.map.goal_point());
        let reward = compute_reward(self.d_prev, target.distance, collided, &cfg.reward);
        let outcome = if collided {
            Outcome::Collision
        } else if target.distance < cfg.reward.c_d {
            Outcome::Arrival
        } else if self.step_index >= cfg.max_episode_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        };
        self.d_prev = target.distance;
        self.outcome = Some(outcome);
        Ok(StepResult {
            observation: render(&self.map, self.pose, &self.camera)?,
            target,
            reward,
            outcome,
            step_index: self.step_index,
            last_action: commanded,
            pose: self.pose,
        })
    }
}
