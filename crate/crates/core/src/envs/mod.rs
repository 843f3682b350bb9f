//! Small continuous-control tasks with a shared episodic interface.
//!
//! `reset` and `step` are pure: the state is a value and every call returns a
//! new one. `terminal` and `truncated` are reported separately; only
//! `terminal` may cut the bootstrap in critic targets.

pub mod pendulum;
pub mod point_mass;

pub use pendulum::PendulumSwingUp;
pub use point_mass::PointMassReach2D;

use crate::error::{Error, Result};
use crate::numcore::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub max_episode_len: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub physics: Vec<f64>,
    pub steps_elapsed: usize,
}

impl EnvState {
    /// Same physics with the episode clock restarted; used to roll past a
    /// time limit when estimating long-horizon returns.
    pub fn with_fresh_clock(&self) -> EnvState {
        EnvState {
            physics: self.physics.clone(),
            steps_elapsed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: EnvState,
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    fn reset(&self, rng: &mut RngStream) -> (EnvState, Vec<f64>);

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step>;

    fn observe(&self, state: &EnvState) -> Vec<f64>;

    /// Inclusive (min, max) of every reward `step` can emit.
    fn reward_bounds(&self) -> (f64, f64);
}

pub const ENV_NAMES: [&str; 2] = ["pendulum", "pointmass"];

#[derive(Clone, Debug)]
pub enum Env {
    Pendulum(PendulumSwingUp),
    PointMass(PointMassReach2D),
}

impl Env {
    pub fn from_name(name: &str) -> Result<Env> {
        match name {
            "pendulum" => Ok(Env::Pendulum(PendulumSwingUp::default())),
            "pointmass" => Ok(Env::PointMass(PointMassReach2D::default())),
            other => Err(Error::config(format!(
                "unknown environment {other:?}; valid names: {}",
                ENV_NAMES.join(", ")
            ))),
        }
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            Env::Pendulum(e) => e,
            Env::PointMass(e) => e,
        }
    }
}

impl Environment for Env {
    fn spec(&self) -> &EnvSpec {
        self.inner().spec()
    }

    fn reset(&self, rng: &mut RngStream) -> (EnvState, Vec<f64>) {
        self.inner().reset(rng)
    }

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step> {
        self.inner().step(state, action)
    }

    fn observe(&self, state: &EnvState) -> Vec<f64> {
        self.inner().observe(state)
    }

    fn reward_bounds(&self) -> (f64, f64) {
        self.inner().reward_bounds()
    }
}

/// Validates the action and clamps it into `[-1, 1]`, warning on clamps.
pub(crate) fn clamp_action(spec: &EnvSpec, action: &[f64]) -> Result<Vec<f64>> {
    if action.len() != spec.act_dim {
        return Err(Error::config(format!(
            "{}: action has {} components, expected {}",
            spec.name,
            action.len(),
            spec.act_dim
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::numeric(format!("{}: non-finite action {action:?}", spec.name)));
    }
    if action.iter().any(|a| a.abs() > 1.0) {
        log::warn!("{}: action {action:?} outside [-1, 1], clamping", spec.name);
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

pub(crate) fn check_physics(spec: &EnvSpec, physics: &[f64]) -> Result<()> {
    if physics.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("{}: non-finite physics {physics:?}", spec.name)))
    }
}
