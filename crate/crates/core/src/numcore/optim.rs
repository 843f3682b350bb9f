//! Adam and Polyak averaging over flat parameter storage.

use super::mlp::MlpParams;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_params(params: &MlpParams, lr: f64) -> Self {
        Self::new(params.num_params(), lr)
    }

    /// One bias-corrected step on a flat slice. Rejected grads leave both
    /// `self` and `params` untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.step_tensors(&mut [params], &[grads])
    }

    fn step_tensors(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        let n: usize = params.iter().map(|t| t.len()).sum();
        if n != self.first_moment.len()
            || params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::config(format!(
                "optimizer holds {} moments, parameter set has {n}",
                self.first_moment.len()
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::numeric("non-finite gradient; optimizer step rejected"));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);

        let mut offset = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            let m = &mut self.first_moment[offset..offset + p.len()];
            let v = &mut self.second_moment[offset..offset + p.len()];
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += p.len();
        }
        Ok(())
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
    params.ensure_same_shape(grads, "adam_step")?;
    let grad_tensors = grads.tensors();
    state.step_tensors(&mut params.tensors_mut(), &grad_tensors)
}

/// `target <- rho * target + (1 - rho) * online`.
pub fn polyak_update(target: &mut MlpParams, online: &MlpParams, rho: f64) -> Result<()> {
    target.ensure_same_shape(online, "polyak_update")?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::config(format!("polyak rate must lie in [0, 1], got {rho}")));
    }
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (tv, ov) in t.iter_mut().zip(o) {
            *tv = rho * *tv + (1.0 - rho) * ov;
        }
    }
    Ok(())
}
