//! Force-controlled unit mass reaching the centre of the unit square.
//!
//! `v' = v + dt (F - 0.1 v)`, `p' = p + dt v'` (semi-implicit Euler), with
//! F = action in [-1, 1]^2. Walls at the square's edges clamp the position
//! and zero the offending velocity component. Observation is
//! (p - goal, v); reward is `-|p' - goal|`, bounded in [-sqrt(0.5), 0].
//! No terminal states; episodes truncate after 150 steps.

use super::{check_physics, clamp_action, EnvSpec, EnvState, Environment, Step};
use crate::error::Result;
use crate::numcore::RngStream;

pub const GOAL: [f64; 2] = [0.5, 0.5];
pub const DAMPING: f64 = 0.1;
pub const FORCE_SCALE: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct PointMassReach2D {
    spec: EnvSpec,
}

impl Default for PointMassReach2D {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "pointmass",
                obs_dim: 4,
                act_dim: 2,
                max_episode_len: 150,
                dt: 0.05,
            },
        }
    }
}

impl PointMassReach2D {
    pub fn state_at(&self, pos: [f64; 2], vel: [f64; 2]) -> EnvState {
        EnvState {
            physics: vec![pos[0], pos[1], vel[0], vel[1]],
            steps_elapsed: 0,
        }
    }
}

fn distance_to_goal(x: f64, y: f64) -> f64 {
    ((x - GOAL[0]).powi(2) + (y - GOAL[1]).powi(2)).sqrt()
}

impl Environment for PointMassReach2D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut RngStream) -> (EnvState, Vec<f64>) {
        let x = rng.uniform();
        let y = rng.uniform();
        let state = self.state_at([x, y], [0.0, 0.0]);
        let obs = self.observe(&state);
        (state, obs)
    }

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step> {
        let action = clamp_action(&self.spec, action)?;
        let dt = self.spec.dt;
        let mut physics = state.physics.clone();
        for axis in 0..2 {
            let v = physics[2 + axis];
            let v_next = v + dt * (FORCE_SCALE * action[axis] - DAMPING * v);
            let p_next = physics[axis] + dt * v_next;
            if (0.0..=1.0).contains(&p_next) {
                physics[axis] = p_next;
                physics[2 + axis] = v_next;
            } else {
                physics[axis] = p_next.clamp(0.0, 1.0);
                physics[2 + axis] = 0.0;
            }
        }
        check_physics(&self.spec, &physics)?;
        let next = EnvState {
            steps_elapsed: state.steps_elapsed + 1,
            physics,
        };
        Ok(Step {
            obs: self.observe(&next),
            reward: -distance_to_goal(next.physics[0], next.physics[1]),
            terminal: false,
            truncated: next.steps_elapsed >= self.spec.max_episode_len,
            state: next,
        })
    }

    fn observe(&self, state: &EnvState) -> Vec<f64> {
        let p = &state.physics;
        vec![p[0] - GOAL[0], p[1] - GOAL[1], p[2], p[3]]
    }

    fn reward_bounds(&self) -> (f64, f64) {
        (-(0.5f64).sqrt(), 0.0)
    }
}
