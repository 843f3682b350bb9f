//! Soft actor-critic mechanics shared by every update schedule.

pub mod critic;
pub mod policy;
pub mod sac;

pub use critic::{
    critic_loss_and_grad, critic_targets, critic_targets_with_actions, critic_update, q_eval, q_eval_batch,
    CriticEnsemble, CriticVariant,
};
pub use policy::{sample_action, Actor, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
pub use sac::{actor_loss_and_grad, actor_update, EntropyTemp, SacAgent};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Polyak rate: fraction of the old target kept per update.
    pub rho: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub critic: CriticVariant,
    pub n_critics: usize,
    /// K for `ensemble_q`; ignored by the two-critic variants.
    pub target_subset: usize,
    pub dropout_rate: f64,
    pub target_dropout: bool,
    pub init_alpha: f64,
    /// Defaults to `-act_dim` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            rho: 0.995,
            lr: 3e-4,
            batch_size: 256,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            critic: CriticVariant::DropoutQ,
            n_critics: 2,
            target_subset: 2,
            dropout_rate: 0.01,
            target_dropout: true,
            init_alpha: 1.0,
            target_entropy: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(format!("agent.{key}: {msg}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho", format!("must lie in [0, 1], got {}", self.rho));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if self.actor_hidden.iter().chain(&self.critic_hidden).any(|&h| h == 0) {
            return bad("actor_hidden/critic_hidden", "layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate", format!("must lie in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.init_alpha > 0.0 && self.init_alpha.is_finite()) {
            return bad("init_alpha", format!("must be positive, got {}", self.init_alpha));
        }
        match self.critic {
            CriticVariant::DoubleQ | CriticVariant::DropoutQ if self.n_critics != 2 => {
                bad("n_critics", format!("{} uses exactly 2 critics, got {}", self.critic.name(), self.n_critics))
            }
            CriticVariant::EnsembleQ if !(2..=self.n_critics).contains(&self.target_subset) => bad(
                "target_subset",
                format!("need n_critics >= target_subset >= 2, got {} and {}", self.n_critics, self.target_subset),
            ),
            _ => Ok(()),
        }
    }
}
