//! Q-function ensembles and their regression update.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::policy::Actor;
use crate::error::{Error, Result};
use crate::numcore::{adam_step, backward, forward_batch, polyak_update, AdamState, MlpParams, MlpShape, Mode, OutputHead, RngStream};
use crate::replay::Batch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticVariant {
    /// Two plain critics, min over both targets.
    DoubleQ,
    /// Two critics with dropout and layer norm in every hidden block.
    DropoutQ,
    /// M plain critics; targets use the min over a random K-subset.
    EnsembleQ,
}

impl CriticVariant {
    pub const NAMES: [&'static str; 3] = ["double_q", "dropout_q", "ensemble_q"];

    pub fn name(self) -> &'static str {
        match self {
            CriticVariant::DoubleQ => "double_q",
            CriticVariant::DropoutQ => "dropout_q",
            CriticVariant::EnsembleQ => "ensemble_q",
        }
    }

    pub fn uses_layer_norm(self) -> bool {
        self == CriticVariant::DropoutQ
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticEnsemble {
    pub online: Vec<MlpParams>,
    pub targets: Vec<MlpParams>,
    pub variant: CriticVariant,
    /// K: how many targets enter the min for `ensemble_q`.
    pub subset_size: usize,
    pub dropout_rate: f64,
    /// Run target networks in train mode (fresh dropout masks) when computing targets.
    pub target_dropout: bool,
    /// Optimizer steps applied to each online network.
    pub update_counts: Vec<u64>,
}

impl CriticEnsemble {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: CriticVariant,
        n_critics: usize,
        subset_size: usize,
        dropout_rate: f64,
        target_dropout: bool,
        in_dim: usize,
        hidden: &[usize],
        rng: &mut RngStream,
    ) -> Result<Self> {
        match variant {
            CriticVariant::DoubleQ | CriticVariant::DropoutQ if n_critics != 2 => {
                return Err(Error::config(format!(
                    "{} uses exactly 2 critics, got {n_critics}",
                    variant.name()
                )))
            }
            CriticVariant::EnsembleQ if !(2..=n_critics).contains(&subset_size) => {
                return Err(Error::config(format!(
                    "ensemble_q needs n_critics >= subset_size >= 2, got {n_critics} and {subset_size}"
                )))
            }
            _ => {}
        }
        let rate = if variant == CriticVariant::DropoutQ { dropout_rate } else { 0.0 };
        let mut sizes = vec![in_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let shape = MlpShape::new(&sizes, variant.uses_layer_norm(), rate, OutputHead::Linear);
        let online = (0..n_critics)
            .map(|_| MlpParams::init(&shape, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            targets: online.clone(),
            online,
            variant,
            subset_size: if variant == CriticVariant::EnsembleQ { subset_size } else { n_critics },
            dropout_rate: rate,
            target_dropout,
            update_counts: vec![0; n_critics],
        })
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }
}

pub fn critic_input(obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    concatenate(Axis(1), &[obs, actions]).map_err(|e| Error::config(format!("critic input: {e}")))
}

fn column(q: Array2<f64>) -> Array1<f64> {
    q.index_axis_move(Axis(1), 0)
}

/// Bootstrapped regression targets `r + gamma (1 - terminal) (min Q' - alpha log pi)`.
pub fn critic_targets(
    batch: &Batch,
    critics: &CriticEnsemble,
    actor: &Actor,
    alpha: f64,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<Array1<f64>> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let next = actor.sample_batch(batch.next_obs.view(), rng)?;
    critic_targets_with_actions(batch, critics, next.actions.view(), &next.log_probs, alpha, gamma, rng)
}

/// Target computation with the next-state actions and their log-probabilities supplied.
pub fn critic_targets_with_actions(
    batch: &Batch,
    critics: &CriticEnsemble,
    next_actions: ArrayView2<f64>,
    next_log_probs: &Array1<f64>,
    alpha: f64,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<Array1<f64>> {
    if next_actions.nrows() != batch.len() || next_log_probs.len() != batch.len() {
        return Err(Error::config("next-state actions do not match the batch"));
    }
    let input = critic_input(batch.next_obs.view(), next_actions)?;
    let members: Vec<usize> = match critics.variant {
        CriticVariant::EnsembleQ => critics.subset_for_targets(rng),
        _ => (0..critics.len()).collect(),
    };
    let mut min_q = Array1::from_elem(batch.len(), f64::INFINITY);
    for &j in &members {
        let mode = if critics.target_dropout { Mode::Train(&mut *rng) } else { Mode::Eval };
        let (q, _) = forward_batch(&critics.targets[j], input.view(), mode)?;
        min_q.zip_mut_with(&column(q), |m, &v| *m = m.min(v));
    }
    let soft = &min_q - &(alpha * next_log_probs);
    let continuing = batch.terminals.mapv(|d| 1.0 - d);
    Ok(&batch.rewards + &(gamma * &continuing * &soft))
}

impl CriticEnsemble {
    fn subset_for_targets(&self, rng: &mut RngStream) -> Vec<usize> {
        let mut s = rng.subset(self.len(), self.subset_size);
        s.sort_unstable();
        s
    }
}

/// Mean squared error of one critic against `y` and its parameter gradient.
/// `mode` decides dropout: fresh masks, frozen masks, or none.
pub fn critic_loss_and_grad(
    critic: &MlpParams,
    input: ArrayView2<f64>,
    y: &Array1<f64>,
    mode: Mode<'_>,
) -> Result<(f64, MlpParams)> {
    let (q, cache) = forward_batch(critic, input, mode)?;
    let q = column(q);
    let n = y.len() as f64;
    let diff = &q - y;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("non-finite critic loss {loss}")));
    }
    let d_out = (diff * (2.0 / n)).insert_axis(Axis(1));
    let (grads, _) = backward(critic, &cache, d_out.view())?;
    Ok((loss, grads))
}

/// One Adam step per online critic on MSE to `y`, then Polyak-averages every
/// target. Returns the pre-step loss of each critic. Nothing changes unless
/// every critic produced finite gradients.
pub fn critic_update(
    critics: &mut CriticEnsemble,
    batch: &Batch,
    y: &Array1<f64>,
    opts: &mut [AdamState],
    rho: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if y.len() != batch.len() {
        return Err(Error::config("targets and batch differ in length"));
    }
    if opts.len() != critics.len() {
        return Err(Error::config("one optimizer per critic required"));
    }
    let input = critic_input(batch.obs.view(), batch.actions.view())?;
    let mut losses = Vec::with_capacity(critics.len());
    let mut all_grads = Vec::with_capacity(critics.len());
    for critic in &critics.online {
        let (loss, grads) = critic_loss_and_grad(critic, input.view(), y, Mode::Train(&mut *rng))?;
        if grads.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::numeric("non-finite critic gradient"));
        }
        losses.push(loss);
        all_grads.push(grads);
    }
    for ((critic, grads), opt) in critics.online.iter_mut().zip(&all_grads).zip(opts.iter_mut()) {
        adam_step(opt, critic, grads)?;
    }
    for (target, online) in critics.targets.iter_mut().zip(&critics.online) {
        polyak_update(target, online, rho)?;
    }
    for c in &mut critics.update_counts {
        *c += 1;
    }
    Ok(losses)
}

/// Eval-mode Q estimate from every online critic.
pub fn q_eval(critics: &CriticEnsemble, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    let mut input = s.to_vec();
    input.extend_from_slice(a);
    critics
        .online
        .iter()
        .map(|c| Ok(crate::numcore::forward(c, &input, Mode::Eval)?.0[0]))
        .collect()
}

/// Eval-mode Q estimates for a batch: `batch x M`.
pub fn q_eval_batch(critics: &CriticEnsemble, obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    let input = critic_input(obs, actions)?;
    let mut out = Array2::zeros((obs.nrows(), critics.len()));
    for (j, c) in critics.online.iter().enumerate() {
        let (q, _) = forward_batch(c, input.view(), Mode::Eval)?;
        out.column_mut(j).assign(&column(q));
    }
    Ok(out)
}
