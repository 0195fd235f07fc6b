use crate::autodiff::{Matrix, ParamSet};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient of every decaying parameter.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-4 }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        AdamState { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One Adam update with bias correction and coupled weight decay.
///
/// Nothing is modified when a gradient entry is not finite.
pub fn adam_step(params: &mut ParamSet, grads: &[Matrix], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::usage("gradient list does not match the parameters"));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numerical(
            format!("non-finite gradient for parameter `{}`", params.iter().nth(bad).map_or("?", |(_, p)| &p.name)),
            state.step as usize,
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (_, p)) in params.iter_mut().enumerate() {
        let wd = if p.decay { cfg.weight_decay } else { 0.0 };
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (((w, &g), mi), vi) in p.value.as_mut_slice().iter_mut().zip(grads[k].as_slice()).zip(m).zip(v) {
            let g = g + wd * *w;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
