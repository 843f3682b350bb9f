//! A five-state chain with known optimal values, for checking estimators.
//!
//! Actions below zero move left, the rest move right. With probability
//! `SLIP` the move goes the other way. Walls keep the walker in place.
//! Entering state `s` pays `s / 4` plus uniform noise in `[-0.5, 0.5]`.
//! No terminals; episodes truncate after `EPISODE_LEN` steps.

use super::{Policy, QEstimator, Rollout, RolloutStep};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

pub const N_STATES: usize = 5;
pub const SLIP: f64 = 0.2;
pub const REWARD_NOISE: f64 = 0.5;
pub const EPISODE_LEN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainState {
    pub cell: usize,
    pub clock: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ChainMdp;

fn direction(action: &[f64]) -> Result<i64> {
    match action.first() {
        Some(a) if a.is_nan() => Err(Error::numeric("NaN action")),
        Some(&a) => Ok(if a < 0.0 { -1 } else { 1 }),
        None => Err(Error::config("chain action needs one component")),
    }
}

fn shift(cell: usize, dir: i64) -> usize {
    (cell as i64 + dir).clamp(0, N_STATES as i64 - 1) as usize
}

fn mean_reward(next: usize) -> f64 {
    next as f64 / (N_STATES - 1) as f64
}

/// `[(probability, next cell)]` for moving in `dir` from `cell`.
fn transitions(cell: usize, dir: i64) -> [(f64, usize); 2] {
    [(1.0 - SLIP, shift(cell, dir)), (SLIP, shift(cell, -dir))]
}

pub fn one_hot(cell: usize) -> Vec<f64> {
    let mut v = vec![0.0; N_STATES];
    v[cell] = 1.0;
    v
}

impl Rollout for ChainMdp {
    type State = ChainState;

    fn reset(&self, rng: &mut RngStream) -> (ChainState, Vec<f64>) {
        let cell = rng.index(N_STATES);
        (ChainState { cell, clock: 0 }, one_hot(cell))
    }

    fn step(&self, state: &ChainState, action: &[f64], rng: &mut RngStream) -> Result<RolloutStep<ChainState>> {
        let dir = direction(action)?;
        let dir = if rng.bernoulli(SLIP) { -dir } else { dir };
        let cell = shift(state.cell, dir);
        let reward = mean_reward(cell) + rng.uniform_range(-REWARD_NOISE, REWARD_NOISE);
        let clock = state.clock + 1;
        Ok(RolloutStep {
            state: ChainState { cell, clock },
            obs: one_hot(cell),
            reward,
            terminal: false,
            truncated: clock >= EPISODE_LEN,
        })
    }

    fn with_fresh_clock(&self, state: &ChainState) -> ChainState {
        ChainState { clock: 0, ..*state }
    }

    fn episode_len(&self) -> usize {
        EPISODE_LEN
    }
}

/// Q* by value iteration until the sup-norm change is below `tol`.
/// Row `s` holds `[Q(s, left), Q(s, right)]`.
pub fn optimal_q(gamma: f64, tol: f64) -> Vec<[f64; 2]> {
    let mut q: Vec<[f64; 2]> = vec![[0.0; 2]; N_STATES];
    loop {
        let v: Vec<f64> = q.iter().map(|r| r[0].max(r[1])).collect();
        let mut delta: f64 = 0.0;
        let next: Vec<[f64; 2]> = (0..N_STATES)
            .map(|s| {
                [-1, 1].map(|dir| {
                    transitions(s, dir)
                        .iter()
                        .map(|&(p, s2)| p * (mean_reward(s2) + gamma * v[s2]))
                        .sum()
                })
            })
            .collect();
        for (a, b) in q.iter().zip(&next) {
            delta = delta.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
        q = next;
        if delta < tol {
            return q;
        }
    }
}

fn cell_of(obs: &[f64]) -> Result<usize> {
    obs.iter()
        .position(|&x| x == 1.0)
        .filter(|_| obs.len() == N_STATES)
        .ok_or_else(|| Error::config("chain observation must be one-hot"))
}

/// Greedy policy and exact critic for the chain, plus a constant offset.
#[derive(Clone, Debug)]
pub struct ChainOracle {
    pub q: Vec<[f64; 2]>,
    pub offset: f64,
}

impl ChainOracle {
    pub fn new(gamma: f64) -> Self {
        Self {
            q: optimal_q(gamma, 1e-12),
            offset: 0.0,
        }
    }
}

impl Policy for ChainOracle {
    fn act(&self, obs: &[f64], _rng: &mut RngStream, _deterministic: bool) -> Result<Vec<f64>> {
        let row = self.q[cell_of(obs)?];
        Ok(vec![if row[1] >= row[0] { 1.0 } else { -1.0 }])
    }
}

impl QEstimator for ChainOracle {
    fn q_values(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let a = if direction(action)? < 0 { 0 } else { 1 };
        Ok(vec![self.q[cell_of(obs)?][a] + self.offset])
    }
}
