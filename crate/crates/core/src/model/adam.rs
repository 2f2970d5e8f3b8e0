use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Matrix<T>]) -> Self {
        let zeros: Vec<Matrix<T>> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update, elementwise over every tensor.
pub fn adam_step<T: Scalar>(
    params: &mut [Matrix<T>],
    grads: &[Matrix<T>],
    state: &mut AdamState<T>,
    lr: T,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::contract(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.m).enumerate() {
        if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != state.v[i].shape() {
            return Err(Error::contract(format!(
                "adam: tensor {i} is {} but gradient is {}",
                p.shape_str(),
                g.shape_str()
            )));
        }
    }
    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let (b1, b2, eps) = (T::of(cfg.beta1), T::of(cfg.beta2), T::of(cfg.eps));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let slots = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut());
        for (((p, &g), m), v) in slots {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
