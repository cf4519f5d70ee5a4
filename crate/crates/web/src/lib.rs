//! wasm-bindgen bindings for the browser demo in `www/`.

use navbot::harness::load_map;
use navbot::mazeenv::{
    cast_columns, render, AgentAction, Camera, Cell, EnvConfig, MazeMap, NavEnv, Observation, Pose, StepResult,
    OBS_HEIGHT, OBS_WIDTH, WALL_PALETTE,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(obs: &Observation) -> Vec<u8> {
    let mut out = Vec::with_capacity(OBS_WIDTH * OBS_HEIGHT * 4);
    for px in obs.as_bytes().chunks_exact(3) {
        out.extend_from_slice(px);
        out.push(255);
    }
    out
}

fn layout_json(map: &MazeMap) -> String {
    let cells: Vec<i32> = (0..map.height() as i64)
        .flat_map(|r| (0..map.width() as i64).map(move |c| (c, r)))
        .map(|(c, r)| match map.cell(c, r) {
            Cell::Free => -1,
            Cell::Wall(id) => id as i32,
        })
        .collect();
    json!({
        "width": map.width(),
        "height": map.height(),
        "cell_size": map.cell_size,
        "cells": cells,
        "goal": map.goal_point(),
        "palette": WALL_PALETTE.map(|[r, g, b]| format!("#{r:02x}{g:02x}{b:02x}")),
    })
    .to_string()
}

/// Names of the builtin maps.
#[wasm_bindgen]
pub fn builtin_maps() -> Vec<String> {
    navbot::harness::BUILTIN_MAPS.iter().map(|(n, _)| n.to_string()).collect()
}

/// First-person view of `map` from an arbitrary pose, as 64x48 RGBA.
#[wasm_bindgen]
pub fn render_view(map: &str, x: f64, y: f64, heading: f64) -> Result<Vec<u8>, JsError> {
    let map = load_map(map).map_err(js_err)?;
    let obs = render(&map, Pose::new(x, y, heading), &Camera::default()).map_err(js_err)?;
    Ok(rgba(&obs))
}

/// A robot driven by hand in one maze.
#[wasm_bindgen]
pub struct Sim {
    env: NavEnv,
    last: StepResult,
    total_reward: f64,
}

#[wasm_bindgen]
impl Sim {
    #[wasm_bindgen(constructor)]
    pub fn new(map: &str) -> Result<Sim, JsError> {
        let map = load_map(map).map_err(js_err)?;
        let mut env = NavEnv::new(map, EnvConfig::default()).map_err(js_err)?;
        let last = env.reset().map_err(js_err)?;
        Ok(Sim {
            env,
            last,
            total_reward: 0.0,
        })
    }

    pub fn reset(&mut self) -> Result<(), JsError> {
        self.last = self.env.reset().map_err(js_err)?;
        self.total_reward = 0.0;
        Ok(())
    }

    /// Starts a new episode at the given pose.
    pub fn place(&mut self, x: f64, y: f64, heading: f64) -> Result<(), JsError> {
        self.last = self.env.reset_to(Pose::new(x, y, heading)).map_err(js_err)?;
        self.total_reward = 0.0;
        Ok(())
    }

    /// Applies one control step; `v` in m/s, `w` in rad/s.
    pub fn step(&mut self, v: f64, w: f64) -> Result<(), JsError> {
        if self.last.outcome.is_terminal() {
            return Err(JsError::new("episode is over; reset first"));
        }
        self.last = self.env.step(AgentAction::new(v, w)).map_err(js_err)?;
        self.total_reward += self.last.reward;
        Ok(())
    }

    pub fn frame(&self) -> Vec<u8> {
        rgba(&self.last.observation)
    }

    /// Pose, goal polar coordinates, reward and outcome as JSON.
    pub fn status(&self) -> String {
        let s = &self.last;
        json!({
            "x": s.pose.x,
            "y": s.pose.y,
            "heading": s.pose.heading,
            "distance": s.target.distance,
            "angle": s.target.angle,
            "reward": s.reward,
            "total_reward": self.total_reward,
            "outcome": format!("{:?}", s.outcome).to_lowercase(),
            "step": s.step_index,
            "v_max": self.env.config().v_max,
            "w_max": self.env.config().w_max,
        })
        .to_string()
    }

    /// Grid cells (`-1` free, else the wall color id), wall colors and the goal point as JSON.
    pub fn layout(&self) -> String {
        layout_json(self.env.map())
    }

    /// Perpendicular wall distance of every image column, left to right.
    pub fn depth_profile(&self) -> Result<Vec<f64>, JsError> {
        let cols = cast_columns(self.env.map(), self.last.pose, &Camera::default()).map_err(js_err)?;
        Ok(cols.iter().map(|c| c.perp_distance).collect())
    }
}
