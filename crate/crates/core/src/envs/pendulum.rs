//! Torque-limited pendulum swing-up.
//!
//! Angle 0 is upright. Dynamics: `theta'' = (3g / 2l) sin(theta) + 3u / (m l^2)`
//! with g = 10, m = l = 1 and torque `u = 2 * action`. Each control step of
//! 0.05 s is integrated with semi-implicit Euler over 10 equal sub-steps;
//! angular velocity is clipped to [-8, 8]. Observation: (cos θ, sin θ, ω).
//! Reward, on the pre-step state: `-(wrap(θ)^2 + 0.1 ω^2 + 0.001 u^2)`,
//! bounded in [-(π² + 6.4 + 0.004), 0]. No terminal states; episodes
//! truncate after 200 steps. Resets draw θ ~ U[-π, π], ω ~ U[-1, 1].

use std::f64::consts::PI;

use super::{check_physics, clamp_action, EnvSpec, EnvState, Environment, Step};
use crate::error::Result;
use crate::numcore::RngStream;

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;
pub const SUBSTEPS: usize = 10;

#[derive(Clone, Debug)]
pub struct PendulumSwingUp {
    spec: EnvSpec,
}

impl Default for PendulumSwingUp {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum",
                obs_dim: 3,
                act_dim: 1,
                max_episode_len: 200,
                dt: 0.05,
            },
        }
    }
}

/// Wraps into (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

pub fn angular_acceleration(theta: f64, torque: f64) -> f64 {
    3.0 * GRAVITY / (2.0 * LENGTH) * theta.sin() + 3.0 * torque / (MASS * LENGTH * LENGTH)
}

/// Kinetic plus potential energy, zero when hanging at rest.
pub fn mechanical_energy(theta: f64, omega: f64) -> f64 {
    let inertia = MASS * LENGTH * LENGTH / 3.0;
    0.5 * inertia * omega * omega + 0.5 * MASS * GRAVITY * LENGTH * (1.0 + theta.cos())
}

pub fn reward(theta: f64, omega: f64, torque: f64) -> f64 {
    let t = wrap_angle(theta);
    -(t * t + 0.1 * omega * omega + 0.001 * torque * torque)
}

impl PendulumSwingUp {
    pub fn state_at(&self, theta: f64, omega: f64) -> EnvState {
        EnvState {
            physics: vec![theta, omega],
            steps_elapsed: 0,
        }
    }
}

impl Environment for PendulumSwingUp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut RngStream) -> (EnvState, Vec<f64>) {
        let theta = rng.uniform_range(-PI, PI);
        let omega = rng.uniform_range(-1.0, 1.0);
        let state = self.state_at(theta, omega);
        let obs = self.observe(&state);
        (state, obs)
    }

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step> {
        let action = clamp_action(&self.spec, action)?;
        let torque = MAX_TORQUE * action[0];
        let (mut theta, mut omega) = (state.physics[0], state.physics[1]);
        let r = reward(theta, omega, torque);

        let h = self.spec.dt / SUBSTEPS as f64;
        for _ in 0..SUBSTEPS {
            omega = (omega + angular_acceleration(theta, torque) * h).clamp(-MAX_SPEED, MAX_SPEED);
            theta += omega * h;
        }
        let next = EnvState {
            physics: vec![theta, omega],
            steps_elapsed: state.steps_elapsed + 1,
        };
        check_physics(&self.spec, &next.physics)?;
        Ok(Step {
            obs: self.observe(&next),
            truncated: next.steps_elapsed >= self.spec.max_episode_len,
            state: next,
            reward: r,
            terminal: false,
        })
    }

    fn observe(&self, state: &EnvState) -> Vec<f64> {
        let (theta, omega) = (state.physics[0], state.physics[1]);
        vec![theta.cos(), theta.sin(), omega]
    }

    fn reward_bounds(&self) -> (f64, f64) {
        let worst = PI * PI + 0.1 * MAX_SPEED * MAX_SPEED + 0.001 * MAX_TORQUE * MAX_TORQUE;
        (-worst, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Semi-implicit Euler at dt/100 with no speed clip.
    fn fine_step(theta: f64, omega: f64, torque: f64, dt: f64) -> (f64, f64) {
        let (mut t, mut w) = (theta, omega);
        let h = dt / 100.0;
        for _ in 0..100 {
            w += (1.5 * 10.0 * t.sin() + 3.0 * torque) * h;
            t += w * h;
        }
        (t, w)
    }

    #[test]
    fn upright_equilibrium_is_fixed_with_zero_reward() {
        let env = PendulumSwingUp::default();
        let s = env.step(&env.state_at(0.0, 0.0), &[0.0]).unwrap();
        assert_eq!(s.state.physics, vec![0.0, 0.0]);
        assert_eq!(s.reward, 0.0);
        assert_eq!(s.obs, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn hanging_step_matches_fine_integrator() {
        let env = PendulumSwingUp::default();
        let s = env.step(&env.state_at(PI, 0.0), &[0.0]).unwrap();
        let (t, w) = fine_step(PI, 0.0, 0.0, 0.05);
        assert!((s.state.physics[0] - t).abs() < 1e-3);
        assert!((s.state.physics[1] - w).abs() < 1e-3);
    }

    #[test]
    fn displaced_step_tracks_fine_integrator() {
        let env = PendulumSwingUp::default();
        let s = env.step(&env.state_at(1.0, -0.5), &[0.4]).unwrap();
        let (t, w) = fine_step(1.0, -0.5, 0.8, 0.05);
        assert!((s.state.physics[0] - t).abs() < 1e-2);
        assert!((s.state.physics[1] - w).abs() < 1e-2);
    }

    #[test]
    fn free_swing_energy_drift_below_five_percent() {
        let env = PendulumSwingUp::default();
        let mut rng = RngStream::new(3, "energy");
        let mut tested = 0;
        while tested < 50 {
            let (mut state, _) = env.reset(&mut rng);
            let e0 = mechanical_energy(state.physics[0], state.physics[1]);
            if e0 < 0.5 {
                // too close to hanging rest for a relative measure
                continue;
            }
            let mut worst: f64 = 0.0;
            for _ in 0..env.spec().max_episode_len {
                state = env.step(&state, &[0.0]).unwrap().state;
                let e = mechanical_energy(state.physics[0], state.physics[1]);
                worst = worst.max((e - e0).abs() / e0);
            }
            assert!(worst < 0.05, "energy drift {worst} from {e0}");
            tested += 1;
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reset_distribution_ranges() {
        let env = PendulumSwingUp::default();
        let mut rng = RngStream::new(5, "env");
        for _ in 0..1000 {
            let (s, obs) = env.reset(&mut rng);
            assert!(s.physics[0] >= -PI && s.physics[0] <= PI);
            assert!(s.physics[1].abs() <= 1.0);
            assert!((obs[0] - s.physics[0].cos()).abs() < 1e-15);
        }
    }
}
