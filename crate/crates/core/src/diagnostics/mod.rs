//! Policy evaluation, Monte-Carlo Q-bias estimation, and the metrics stream.

pub mod metrics;
pub mod tabular;

pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};

use crate::agent::{q_eval, sample_action, SacAgent};
use crate::envs::{Env, EnvState, Environment};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

pub trait Policy {
    fn act(&self, obs: &[f64], rng: &mut RngStream, deterministic: bool) -> Result<Vec<f64>>;
}

pub trait QEstimator {
    /// One estimate per critic.
    fn q_values(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>>;
}

impl Policy for SacAgent {
    fn act(&self, obs: &[f64], rng: &mut RngStream, deterministic: bool) -> Result<Vec<f64>> {
        Ok(sample_action(&self.actor, obs, rng, deterministic)?.0)
    }
}

impl QEstimator for SacAgent {
    fn q_values(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        q_eval(&self.critics, obs, action)
    }
}

pub struct RolloutStep<S> {
    pub state: S,
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// An episodic task that may draw randomness while stepping.
pub trait Rollout {
    type State: Clone;

    fn reset(&self, rng: &mut RngStream) -> (Self::State, Vec<f64>);

    fn step(&self, state: &Self::State, action: &[f64], rng: &mut RngStream) -> Result<RolloutStep<Self::State>>;

    /// Same state with the time limit restarted.
    fn with_fresh_clock(&self, state: &Self::State) -> Self::State;

    fn episode_len(&self) -> usize;
}

impl Rollout for Env {
    type State = EnvState;

    fn reset(&self, rng: &mut RngStream) -> (EnvState, Vec<f64>) {
        Environment::reset(self, rng)
    }

    fn step(&self, state: &EnvState, action: &[f64], _rng: &mut RngStream) -> Result<RolloutStep<EnvState>> {
        let s = Environment::step(self, state, action)?;
        Ok(RolloutStep {
            state: s.state,
            obs: s.obs,
            reward: s.reward,
            terminal: s.terminal,
            truncated: s.truncated,
        })
    }

    fn with_fresh_clock(&self, state: &EnvState) -> EnvState {
        state.with_fresh_clock()
    }

    fn episode_len(&self) -> usize {
        self.spec().max_episode_len
    }
}

/// Mean and standard deviation with `ddof` delta degrees of freedom.
pub fn mean_and_std(xs: &[f64], ddof: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() as f64 <= ddof {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - ddof);
    (mean, var.sqrt())
}

/// Undiscounted return of `n_episodes` deterministic episodes: (mean, population std).
pub fn evaluate_policy<R: Rollout>(
    policy: &impl Policy,
    env: &R,
    n_episodes: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let (mut state, mut obs) = env.reset(rng);
        let mut total = 0.0;
        loop {
            let action = policy.act(&obs, rng, true)?;
            let step = env.step(&state, &action, rng).map_err(|e| {
                Error::numeric(format!(
                    "evaluation aborted after {} complete episodes (returns {returns:?}): {e}",
                    returns.len()
                ))
            })?;
            total += step.reward;
            if step.terminal || step.truncated {
                break;
            }
            (state, obs) = (step.state, step.obs);
        }
        returns.push(total);
    }
    Ok(mean_and_std(&returns, 0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasEstimate {
    pub mean_bias: f64,
    /// Sample std of the per-point bias.
    pub std_bias: f64,
    /// `mean_bias / max(|mean MC return|, 1e-6)`.
    pub normalized_mean: f64,
    pub mean_return: f64,
    pub n_points: usize,
}

impl BiasEstimate {
    pub fn standard_error(&self) -> f64 {
        self.std_bias / (self.n_points as f64).sqrt()
    }
}

/// Smallest horizon with `gamma^h < 1e-3`.
pub fn bias_horizon(gamma: f64) -> usize {
    let mut h = 0;
    let mut g = 1.0;
    while g >= 1e-3 {
        g *= gamma;
        h += 1;
    }
    h
}

/// Mean over critics of Q(s, a) minus the discounted Monte-Carlo return from
/// (s, a), at `n_points` pairs visited by the stochastic policy. Each start
/// follows a uniformly random burn-in within one episode. Returns are
/// truncated after `horizon` steps and roll past time limits.
pub fn estimate_bias<A, R>(
    agent: &A,
    env: &R,
    n_points: usize,
    horizon: usize,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<BiasEstimate>
where
    A: Policy + QEstimator,
    R: Rollout,
{
    if n_points == 0 {
        return Err(Error::config("bias estimation needs at least one point"));
    }
    if gamma.powi(horizon as i32) >= 1e-3 {
        return Err(Error::config(format!(
            "horizon {horizon} too short for gamma {gamma}; need at least {}",
            bias_horizon(gamma)
        )));
    }
    let mut biases = Vec::with_capacity(n_points);
    let mut returns = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let (mut state, mut obs) = env.reset(rng);
        for _ in 0..rng.index(env.episode_len()) {
            let action = agent.act(&obs, rng, false)?;
            let step = env.step(&state, &action, rng)?;
            (state, obs) = if step.terminal || step.truncated {
                env.reset(rng)
            } else {
                (step.state, step.obs)
            };
        }

        let first = agent.act(&obs, rng, false)?;
        let qs = agent.q_values(&obs, &first)?;
        let q = qs.iter().sum::<f64>() / qs.len() as f64;

        let mut action = first;
        let mut ret = 0.0;
        let mut discount = 1.0;
        for _ in 0..horizon {
            let step = env.step(&state, &action, rng)?;
            ret += discount * step.reward;
            discount *= gamma;
            if step.terminal {
                break;
            }
            state = if step.truncated { env.with_fresh_clock(&step.state) } else { step.state };
            action = agent.act(&step.obs, rng, false)?;
        }
        biases.push(q - ret);
        returns.push(ret);
    }
    let (mean_bias, std_bias) = mean_and_std(&biases, 1.0);
    let (mean_return, _) = mean_and_std(&returns, 0.0);
    let est = BiasEstimate {
        mean_bias,
        std_bias,
        normalized_mean: mean_bias / mean_return.abs().max(1e-6),
        mean_return,
        n_points,
    };
    if ![est.mean_bias, est.std_bias, est.normalized_mean].iter().all(|v| v.is_finite()) {
        return Err(Error::numeric(format!("non-finite bias estimate {est:?}")));
    }
    Ok(est)
}

#[cfg(test)]
mod tests;
