use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

use super::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// First and second moment buffers, one pair per parameter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
///
/// `grads[i]` belongs to `params[i]`; `None` means the parameter did not
/// take part in the loss and is treated as a zero gradient. Moment buffers
/// are zero-initialized on the first call.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Option<Tensor>],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    contract!(
        params.len() == grads.len(),
        "adam_step got {} parameters but {} gradients",
        params.len(),
        grads.len()
    );
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.v = state.m.clone();
    }
    contract!(
        state.m.len() == params.len(),
        "adam state holds {} buffers for {} parameters",
        state.m.len(),
        params.len()
    );
    for (i, p) in params.iter().enumerate() {
        contract!(state.m[i].len() == p.numel(), "adam state buffer {i} does not match parameter shape {:?}", p.shape());
        if let Some(g) = &grads[i] {
            contract!(g.shape() == p.shape(), "gradient {i} shape {:?} != parameter shape {:?}", g.shape(), p.shape());
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let g = grads[i].as_ref().map(Tensor::data);
        let mut updated = p.to_vec();
        let mut changed = false;
        for j in 0..updated.len() {
            let gj = g.map_or(0.0, |g| g[j]);
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
            let delta = config.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + config.eps);
            if delta != 0.0 {
                updated[j] -= delta;
                changed = true;
            }
        }
        if changed {
            *p = Tensor::new(p.shape().to_vec(), updated)?;
        }
    }
    Ok(())
}
