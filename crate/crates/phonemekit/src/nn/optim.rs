//! SGD, Adam, and AdaDelta parameter updates plus the post-step
//! max-norm projection.

use super::{apply_max_norm, Gradients, Layer, Model};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    AdaDelta { lr: f64, rho: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd() -> Self {
        Self::Sgd { lr: 0.01 }
    }

    pub fn adam() -> Self {
        Self::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adadelta() -> Self {
        Self::AdaDelta {
            lr: 1.0,
            rho: 0.95,
            eps: 1e-6,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sgd" => Ok(Self::sgd()),
            "adam" => Ok(Self::adam()),
            "adadelta" => Ok(Self::adadelta()),
            other => Err(Error::Parameter(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Accumulators for one parameterized layer: (first, second) moment
/// pairs for weights and bias. Adam uses them as (m, v); AdaDelta as
/// (acc_grad_sq, acc_update_sq); SGD leaves them untouched.
#[derive(Debug, Clone)]
struct Slot {
    w_a: Vec<f64>,
    w_b: Vec<f64>,
    b_a: Vec<f64>,
    b_b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    /// Adam step counter for bias correction.
    t: u64,
    slots: Vec<Option<Slot>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, model: &Model) -> Self {
        let slots = model
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv2D(c) => Some(Slot {
                    w_a: vec![0.0; c.weights.len()],
                    w_b: vec![0.0; c.weights.len()],
                    b_a: vec![0.0; c.bias.len()],
                    b_b: vec![0.0; c.bias.len()],
                }),
                Layer::Dense(d) => Some(Slot {
                    w_a: vec![0.0; d.weights.len()],
                    w_b: vec![0.0; d.weights.len()],
                    b_a: vec![0.0; d.bias.len()],
                    b_b: vec![0.0; d.bias.len()],
                }),
                _ => None,
            })
            .collect();
        Self { kind, t: 0, slots }
    }
}

fn update(
    kind: OptimizerKind,
    t: u64,
    params: &mut [f64],
    grads: &[f64],
    acc_a: &mut [f64],
    acc_b: &mut [f64],
) {
    match kind {
        OptimizerKind::Sgd { lr } => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let bc1 = 1.0 - beta1.powi(t as i32);
            let bc2 = 1.0 - beta2.powi(t as i32);
            for i in 0..params.len() {
                let g = grads[i];
                acc_a[i] = beta1 * acc_a[i] + (1.0 - beta1) * g;
                acc_b[i] = beta2 * acc_b[i] + (1.0 - beta2) * g * g;
                let m_hat = acc_a[i] / bc1;
                let v_hat = acc_b[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        OptimizerKind::AdaDelta { lr, rho, eps } => {
            for i in 0..params.len() {
                let g = grads[i];
                acc_a[i] = rho * acc_a[i] + (1.0 - rho) * g * g;
                let step = -((acc_b[i] + eps).sqrt() / (acc_a[i] + eps).sqrt()) * g;
                acc_b[i] = rho * acc_b[i] + (1.0 - rho) * step * step;
                params[i] += lr * step;
            }
        }
    }
}

/// One optimizer step over every parameterized layer, followed by the
/// max-norm projection on constrained Dense layers.
pub fn optimizer_step(
    state: &mut OptimizerState,
    model: &mut Model,
    grads: &Gradients,
) -> Result<()> {
    if grads.per_layer.len() != model.layers.len() {
        return Err(Error::ShapeMismatch(
            "gradient list does not match model layers".into(),
        ));
    }
    for pg in grads.per_layer.iter().flatten() {
        if pg.weights.iter().chain(&pg.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
    }
    state.t += 1;
    for (li, layer) in model.layers.iter_mut().enumerate() {
        let Some(pg) = &grads.per_layer[li] else {
            continue;
        };
        let slot = state.slots[li].as_mut().ok_or_else(|| {
            Error::ShapeMismatch(format!("optimizer state missing for layer {li}"))
        })?;
        match layer {
            Layer::Conv2D(c) => {
                update(state.kind, state.t, &mut c.weights, &pg.weights, &mut slot.w_a, &mut slot.w_b);
                update(state.kind, state.t, &mut c.bias, &pg.bias, &mut slot.b_a, &mut slot.b_b);
            }
            Layer::Dense(d) => {
                update(state.kind, state.t, &mut d.weights, &pg.weights, &mut slot.w_a, &mut slot.w_b);
                update(state.kind, state.t, &mut d.bias, &pg.bias, &mut slot.b_a, &mut slot.b_b);
                if let Some(bound) = d.max_norm {
                    apply_max_norm(&mut d.weights, d.in_dim, d.units, bound);
                }
            }
            _ => unreachable!("parameterless layer has no gradients"),
        }
    }
    Ok(())
}
