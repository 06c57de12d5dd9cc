use crate::error::{config_err, Result};
use crate::tensor::{Real, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.shape().numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.shape().numel()]).collect(),
        }
    }

    pub fn matches(&self, params: &[Tensor<T>]) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| m.len() == p.shape().numel() && v.len() == p.shape().numel())
    }
}

/// One bias-corrected Adam update. Parameters without a gradient keep
/// their value and moments.
pub fn adam_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Option<Vec<T>>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(config_err!(
            "adam: {} parameters, {} gradients, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if let Some(g) = g {
            if g.len() != p.shape().numel() {
                return Err(config_err!(
                    "adam: gradient {i} has {} values for a {} parameter",
                    g.len(),
                    p.shape()
                ));
            }
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (T::from_float(ADAM_BETA1), T::from_float(ADAM_BETA2));
    let c1 = T::from_float(1.0 - ADAM_BETA1.powf(t));
    let c2 = T::from_float(1.0 - ADAM_BETA2.powf(t));
    let (lr, eps) = (T::from_float(lr), T::from_float(ADAM_EPS));
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let Some(g) = g else { continue };
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mh = *mi / c1;
            let vh = *vi / c2;
            *w -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}
