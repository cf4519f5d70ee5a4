//! Grid maze world with unicycle kinematics and a raycast camera.

mod env;
mod kinematics;
mod map;
mod raycast;
mod render;

pub use env::{
    compute_reward, target_polar, EnvConfig, EnvError, NavEnv, Outcome, RewardConfig, StepResult,
    TargetInfo, DISCRETE_ACTIONS,
};
pub use kinematics::{integrate, wrap_angle, AgentAction, Pose};
pub use map::{Cell, MapError, MazeMap};
pub use raycast::{cast_ray, RayError, RayHit, Side};
pub use render::{
    cast_columns, column_offset, render, wall_pixels_in_column, Camera, Column, Observation,
    ObservationError, CEILING_COLOR, FLOOR_COLOR, OBS_CHANNELS, OBS_HEIGHT, OBS_LEN, OBS_WIDTH,
    PPM_HEADER, WALL_PALETTE,
};
