//! Adam with decoupled weight decay.

use ndarray::{Array1, Array2};

use super::model::{EstimatorModel, Gradients};
use super::train::TrainConfig;

/// First/second-moment accumulators, shaped like the model.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m_weights: Vec<Array2<f64>>,
    pub v_weights: Vec<Array2<f64>>,
    pub m_biases: Vec<Array1<f64>>,
    pub v_biases: Vec<Array1<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &EstimatorModel) -> Self {
        AdamState {
            m_weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            step: 0,
        }
    }
}

fn update(
    param: &mut f64,
    grad: f64,
    m: &mut f64,
    v: &mut f64,
    cfg: &TrainConfig,
    bc1: f64,
    bc2: f64,
) {
    *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * grad;
    *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * grad * grad;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *param -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    *param *= 1.0 - cfg.lr * cfg.weight_decay;
}

/// One bias-corrected Adam step followed by decoupled decay
/// (`params *= 1 - lr*weight_decay`). Decay applies to weights and
/// biases alike.
pub fn adam_step(
    model: &mut EstimatorModel,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let bc1 = 1.0 - cfg.adam_beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.adam_beta2.powi(state.step as i32);
    for l in 0..model.weights.len() {
        for (((p, &g), m), v) in model.weights[l]
            .iter_mut()
            .zip(grads.weights[l].iter())
            .zip(state.m_weights[l].iter_mut())
            .zip(state.v_weights[l].iter_mut())
        {
            update(p, g, m, v, cfg, bc1, bc2);
        }
        for (((p, &g), m), v) in model.biases[l]
            .iter_mut()
            .zip(grads.biases[l].iter())
            .zip(state.m_biases[l].iter_mut())
            .zip(state.v_biases[l].iter_mut())
        {
            update(p, g, m, v, cfg, bc1, bc2);
        }
    }
}
