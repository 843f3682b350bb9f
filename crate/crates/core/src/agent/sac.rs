//! Policy and temperature updates, and the agent that bundles all state.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::critic::{critic_input, critic_targets, critic_update, CriticEnsemble};
use super::policy::{sample_action, Actor, PolicySample};
use super::AgentConfig;
use crate::error::{Error, Result};
use crate::numcore::{adam_step, backward, forward_batch, AdamState, MlpParams, Mode, RngStream};
use crate::replay::Batch;

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyTemp {
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub optimizer: AdamState,
}

impl EntropyTemp {
    pub fn new(init_alpha: f64, target_entropy: f64, lr: f64) -> Self {
        Self {
            log_alpha: init_alpha.ln(),
            target_entropy,
            optimizer: AdamState::new(1, lr),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// `mean(-log_alpha * (log_pi + target_entropy))` and its derivative in `log_alpha`.
    pub fn loss_and_grad(&self, log_probs: &Array1<f64>) -> (f64, f64) {
        let gap = log_probs.mean().unwrap_or(0.0) + self.target_entropy;
        (-self.log_alpha * gap, -gap)
    }

    pub fn step(&mut self, log_probs: &Array1<f64>) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(log_probs);
        let mut param = [self.log_alpha];
        self.optimizer.step(&mut param, &[grad])?;
        self.log_alpha = param[0];
        Ok(loss)
    }
}

/// Policy objective `mean(alpha log pi(a|s) - min_j Q_j(s, a))` with `a`
/// reparameterized through `noise`; critics run in eval mode.
/// Returns the loss, the actor gradient, and the policy sample.
pub fn actor_loss_and_grad(
    actor: &Actor,
    critics: &CriticEnsemble,
    alpha: f64,
    obs: ArrayView2<f64>,
    noise: Array2<f64>,
) -> Result<(f64, MlpParams, PolicySample)> {
    let sample = actor.sample_with_noise(obs, noise)?;
    let n = obs.nrows();
    let input = critic_input(obs, sample.actions.view())?;

    let mut qs = Vec::with_capacity(critics.len());
    for critic in &critics.online {
        let (q, cache) = forward_batch(critic, input.view(), Mode::Eval)?;
        qs.push((q.index_axis_move(Axis(1), 0), cache));
    }
    let argmin: Vec<usize> = (0..n)
        .map(|b| {
            (0..qs.len())
                .min_by(|&i, &j| qs[i].0[b].total_cmp(&qs[j].0[b]))
                .expect("at least one critic")
        })
        .collect();
    let min_q = Array1::from_iter(argmin.iter().enumerate().map(|(b, &j)| qs[j].0[b]));
    let loss = (alpha * &sample.log_probs - &min_q).mean().unwrap_or(0.0);
    if !loss.is_finite() {
        return Err(Error::numeric(format!("non-finite actor loss {loss}")));
    }

    let obs_dim = obs.ncols();
    let mut d_actions = Array2::zeros(sample.actions.dim());
    for (j, (critic, (_, cache))) in critics.online.iter().zip(&qs).enumerate() {
        if !argmin.contains(&j) {
            continue;
        }
        let d_q = Array2::from_shape_fn((n, 1), |(b, _)| if argmin[b] == j { -1.0 / n as f64 } else { 0.0 });
        let (_, d_input) = backward(critic, cache, d_q.view())?;
        d_actions += &d_input.slice(ndarray::s![.., obs_dim..]);
    }
    let d_log_probs = Array1::from_elem(n, alpha / n as f64);
    let grads = actor.backward(&sample, d_actions.view(), &d_log_probs)?;
    Ok((loss, grads, sample))
}

/// One policy step and, when `update_alpha`, one temperature step on the
/// same sample. Returns (actor loss, alpha loss); alpha loss is 0 when skipped.
pub fn actor_update(
    actor: &mut Actor,
    critics: &CriticEnsemble,
    temp: &mut EntropyTemp,
    batch: &Batch,
    opt: &mut AdamState,
    rng: &mut RngStream,
    update_alpha: bool,
) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let noise = Array2::from_shape_simple_fn((batch.len(), actor.act_dim), || rng.normal());
    let (loss, grads, sample) = actor_loss_and_grad(actor, critics, temp.alpha(), batch.obs.view(), noise)?;
    adam_step(opt, &mut actor.net, &grads)?;
    let alpha_loss = if update_alpha { temp.step(&sample.log_probs)? } else { 0.0 };
    Ok((loss, alpha_loss))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SacAgent {
    pub config: AgentConfig,
    pub actor: Actor,
    pub critics: CriticEnsemble,
    pub temp: EntropyTemp,
    pub actor_opt: AdamState,
    pub critic_opts: Vec<AdamState>,
    pub policy_updates: u64,
    pub alpha_updates: u64,
}

impl SacAgent {
    pub fn new(config: AgentConfig, obs_dim: usize, act_dim: usize, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let actor = Actor::new(obs_dim, act_dim, &config.actor_hidden, rng)?;
        let critics = CriticEnsemble::new(
            config.critic,
            config.n_critics,
            config.target_subset,
            config.dropout_rate,
            config.target_dropout,
            obs_dim + act_dim,
            &config.critic_hidden,
            rng,
        )?;
        let target_entropy = config.target_entropy.unwrap_or(-(act_dim as f64));
        let temp = EntropyTemp::new(config.init_alpha, target_entropy, config.lr);
        let actor_opt = AdamState::for_params(&actor.net, config.lr);
        let critic_opts = critics.online.iter().map(|c| AdamState::for_params(c, config.lr)).collect();
        Ok(Self {
            config,
            actor,
            critics,
            temp,
            actor_opt,
            critic_opts,
            policy_updates: 0,
            alpha_updates: 0,
        })
    }

    pub fn act(&self, obs: &[f64], rng: &mut RngStream, deterministic: bool) -> Result<Vec<f64>> {
        Ok(sample_action(&self.actor, obs, rng, deterministic)?.0)
    }

    /// Targets from `batch`, then one update of every critic. Returns the mean loss.
    pub fn critic_step(&mut self, batch: &Batch, rng: &mut RngStream) -> Result<f64> {
        let y = critic_targets(batch, &self.critics, &self.actor, self.temp.alpha(), self.config.gamma, rng)?;
        let losses = critic_update(&mut self.critics, batch, &y, &mut self.critic_opts, self.config.rho, rng)?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    pub fn actor_step(&mut self, batch: &Batch, rng: &mut RngStream, update_alpha: bool) -> Result<(f64, f64)> {
        let out = actor_update(
            &mut self.actor,
            &self.critics,
            &mut self.temp,
            batch,
            &mut self.actor_opt,
            rng,
            update_alpha,
        )?;
        self.policy_updates += 1;
        if update_alpha {
            self.alpha_updates += 1;
        }
        Ok(out)
    }

    /// Temperature-only step using fresh policy samples on `batch.obs`.
    pub fn temperature_step(&mut self, batch: &Batch, rng: &mut RngStream) -> Result<f64> {
        let sample = self.actor.sample_batch(batch.obs.view(), rng)?;
        let loss = self.temp.step(&sample.log_probs)?;
        self.alpha_updates += 1;
        Ok(loss)
    }
}
