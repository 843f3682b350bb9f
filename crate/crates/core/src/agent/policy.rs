//! Tanh-squashed diagonal Gaussian policy.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numcore::{backward, forward, forward_batch, ForwardCache, MlpParams, MlpShape, Mode, OutputHead, RngStream};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    /// Emits `[mean; log_std]`, `2 * act_dim` wide.
    pub net: MlpParams,
    pub act_dim: usize,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 - tanh(u)^2)` without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `tanh(mean + std * noise)` for one action, given the noise.
pub fn squashed_log_prob(noise: &[f64], log_std: &[f64], pre_tanh: &[f64]) -> f64 {
    noise
        .iter()
        .zip(log_std)
        .zip(pre_tanh)
        .map(|((e, ls), u)| -0.5 * e * e - ls - HALF_LOG_TWO_PI - log_one_minus_tanh_sq(*u))
        .sum()
}

/// Reparameterized batch of actions plus what the actor gradient needs.
#[derive(Clone, Debug)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub noise: Array2<f64>,
    std: Array2<f64>,
    /// 1.0 where the raw log-std sat inside the clamp range.
    log_std_active: Array2<f64>,
    cache: ForwardCache,
}

impl Actor {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut RngStream) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim);
        let net = MlpParams::init(&MlpShape::new(&sizes, false, 0.0, OutputHead::GaussianPair), rng)?;
        Ok(Self { net, act_dim })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn split(&self, out: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("policy produced a non-finite mean or log-std"));
        }
        let mean = out.slice(s![.., ..self.act_dim]).to_owned();
        let raw = out.slice(s![.., self.act_dim..]);
        let log_std = raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let active = raw.mapv(|v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) { 1.0 } else { 0.0 });
        Ok((mean, log_std, active))
    }

    /// Squashes `mean + std * noise` for a batch of observations with caller-supplied noise.
    pub fn sample_with_noise(&self, obs: ArrayView2<f64>, noise: Array2<f64>) -> Result<PolicySample> {
        let (out, cache) = forward_batch(&self.net, obs, Mode::Eval)?;
        let (mean, log_std, log_std_active) = self.split(&out)?;
        if noise.dim() != mean.dim() {
            return Err(Error::config("policy noise shape mismatch"));
        }
        let std = log_std.mapv(f64::exp);
        let pre_tanh = &mean + &(&std * &noise);
        let actions = pre_tanh.mapv(f64::tanh);
        let log_probs = Array1::from_iter((0..mean.nrows()).map(|b| {
            squashed_log_prob(
                noise.row(b).to_slice().expect("row-major"),
                log_std.row(b).to_slice().expect("row-major"),
                pre_tanh.row(b).to_slice().expect("row-major"),
            )
        }));
        Ok(PolicySample {
            actions,
            log_probs,
            noise,
            std,
            log_std_active,
            cache,
        })
    }

    pub fn sample_batch(&self, obs: ArrayView2<f64>, rng: &mut RngStream) -> Result<PolicySample> {
        let noise = Array2::from_shape_simple_fn((obs.nrows(), self.act_dim), || rng.normal());
        self.sample_with_noise(obs, noise)
    }

    /// Parameter gradient given dLoss/dAction (per row) and dLoss/dLogProb (per row).
    pub fn backward(
        &self,
        sample: &PolicySample,
        d_actions: ArrayView2<f64>,
        d_log_probs: &Array1<f64>,
    ) -> Result<MlpParams> {
        let n = sample.actions.nrows();
        let a = self.act_dim;
        let mut d_out = Array2::zeros((n, 2 * a));
        for b in 0..n {
            for i in 0..a {
                let act = sample.actions[[b, i]];
                let d_pre = d_actions[[b, i]] * (1.0 - act * act) + d_log_probs[b] * 2.0 * act;
                d_out[[b, i]] = d_pre;
                let d_log_std = d_pre * sample.std[[b, i]] * sample.noise[[b, i]] - d_log_probs[b];
                d_out[[b, a + i]] = d_log_std * sample.log_std_active[[b, i]];
            }
        }
        Ok(backward(&self.net, &sample.cache, d_out.view())?.0)
    }
}

/// Stochastic: `(tanh(u), Some(log_prob))` with `u ~ N(mean, std^2)`.
/// Deterministic: `(tanh(mean), None)`.
pub fn sample_action(
    actor: &Actor,
    obs: &[f64],
    rng: &mut RngStream,
    deterministic: bool,
) -> Result<(Vec<f64>, Option<f64>)> {
    if obs.len() != actor.obs_dim() {
        return Err(Error::config(format!(
            "observation has {} entries, policy expects {}",
            obs.len(),
            actor.obs_dim()
        )));
    }
    if deterministic {
        let (out, _) = forward(&actor.net, obs, Mode::Eval)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("policy produced a non-finite mean or log-std"));
        }
        return Ok((out[..actor.act_dim].iter().map(|m| m.tanh()).collect(), None));
    }
    let view = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::config(e.to_string()))?;
    let sample = actor.sample_batch(view, rng)?;
    let action = sample.actions.index_axis(Axis(0), 0).to_vec();
    Ok((action, Some(sample.log_probs[0])))
}
