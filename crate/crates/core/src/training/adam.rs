//! Bias-corrected Adam over the named parameter store.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::model::ModelParams;
use crate::numerics::Tensor;
use crate::training::schedule::TrainConfig;

/// First and second moment buffers, one pair per parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn zeros_like(params: &ModelParams) -> AdamState {
        let m = params
            .iter()
            .map(|(name, t)| (name.to_string(), Tensor::zeros(t.shape())))
            .collect::<BTreeMap<_, _>>();
        AdamState { v: m.clone(), m }
    }

    /// Checks the buffers cover exactly the given parameters, shape for shape.
    pub fn validate_against(&self, params: &ModelParams) -> Result<()> {
        for (label, buffers) in [("first", &self.m), ("second", &self.v)] {
            if buffers.len() != params.len() {
                return Err(CoreError::structure(format!(
                    "{label}-moment buffers cover {} parameters, model has {}",
                    buffers.len(),
                    params.len()
                )));
            }
            for (name, tensor) in params.iter() {
                let buf = buffers.get(name).ok_or_else(|| {
                    CoreError::structure(format!("missing {label}-moment buffer for {name}"))
                })?;
                if buf.shape() != tensor.shape() {
                    return Err(CoreError::structure(format!(
                        "{label}-moment buffer for {name} has shape {:?}, parameter is {:?}",
                        buf.shape(),
                        tensor.shape()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. `step` is the 1-based update count; a
/// parameter absent from `grads` is treated as having a zero gradient.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    step: u64,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if step == 0 {
        return Err(CoreError::config("adam update steps are 1-based"));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(CoreError::Training(format!(
            "non-finite or negative learning rate {lr} at step {step}"
        )));
    }
    let bc1 = 1.0 - config.beta1.powf(step as f64);
    let bc2 = 1.0 - config.beta2.powf(step as f64);
    for (name, param) in params.iter_mut() {
        let zero;
        let g = match grads.get(name) {
            Some(g) => {
                if g.shape() != param.shape() {
                    return Err(CoreError::Training(format!(
                        "gradient for {name} has shape {:?}, parameter is {:?}",
                        g.shape(),
                        param.shape()
                    )));
                }
                if g.data().iter().any(|x| !x.is_finite()) {
                    return Err(CoreError::Training(format!(
                        "non-finite gradient for parameter {name} at step {step}"
                    )));
                }
                g
            }
            None => {
                zero = Tensor::zeros(param.shape());
                &zero
            }
        };
        let m = state
            .m
            .get_mut(name)
            .ok_or_else(|| CoreError::structure(format!("missing first-moment buffer for {name}")))?;
        let v = state
            .v
            .get_mut(name)
            .ok_or_else(|| CoreError::structure(format!("missing second-moment buffer for {name}")))?;
        let (m, v, p) = (m.data_mut(), v.data_mut(), param.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
