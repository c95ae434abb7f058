//! Mini-batch training loop with seeded shuffling and per-epoch
//! history.

use super::{backward, cross_entropy, forward, optimizer_step, OptimizerState, Model, Tensor};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

fn gather(x: &Tensor, y: &Tensor, idx: &[usize]) -> (Tensor, Tensor) {
    let n = x.shape[0];
    let sample_len = x.len() / n;
    let k = y.shape[1];
    let mut bx = Vec::with_capacity(idx.len() * sample_len);
    let mut by = Vec::with_capacity(idx.len() * k);
    for &i in idx {
        bx.extend_from_slice(&x.data[i * sample_len..(i + 1) * sample_len]);
        by.extend_from_slice(&y.data[i * k..(i + 1) * k]);
    }
    let mut shape = x.shape.clone();
    shape[0] = idx.len();
    (
        Tensor { shape, data: bx },
        Tensor {
            shape: vec![idx.len(), k],
            data: by,
        },
    )
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Train in place: seeded shuffle per epoch, forward/backward/step per
/// mini-batch (last batch may be short), max-norm applied inside the
/// step. Identical seeds give bit-identical runs.
pub fn fit(
    model: &mut Model,
    x: &Tensor,
    onehot: &Tensor,
    config: &TrainConfig,
    state: &mut OptimizerState,
    validation: Option<(&Tensor, &Tensor)>,
) -> Result<History> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Parameter("epochs and batch_size must be >= 1".into()));
    }
    let n = *x
        .shape
        .first()
        .filter(|&&n| n > 0)
        .ok_or_else(|| Error::Parameter("empty training set".into()))?;
    if onehot.shape != [n, model.output_width()] {
        return Err(Error::ShapeMismatch(format!(
            "labels {:?} vs {n} samples x {} classes",
            onehot.shape,
            model.output_width()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let k = model.output_width();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (bx, by) = gather(x, onehot, chunk);
            let (probs, cache) = forward(model, &bx, true, &mut rng)?;
            let loss = cross_entropy(&probs, &by)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss diverged at epoch {epoch} ({loss})"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            for (prow, yrow) in probs.data.chunks_exact(k).zip(by.data.chunks_exact(k)) {
                if yrow[argmax(prow)] == 1.0 {
                    correct += 1;
                }
            }
            let grads = backward(model, &cache, &by)?;
            optimizer_step(state, model, &grads)?;
        }
        let (val_loss, val_accuracy) = match validation {
            Some((vx, vy)) => {
                let (l, a) = evaluate_split(model, vx, vy)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        history.push(EpochStats {
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(History { epochs: history })
}

/// Inference-mode loss and argmax accuracy over a labeled set.
pub fn evaluate_split(model: &Model, x: &Tensor, onehot: &Tensor) -> Result<(f64, f64)> {
    let n = x.shape[0];
    let k = model.output_width();
    let rows = super::predict(model, x)?;
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    let probs = Tensor::from_vec(&[n, k], flat)?;
    let loss = cross_entropy(&probs, onehot)?;
    let mut correct = 0usize;
    for (prow, yrow) in probs.data.chunks_exact(k).zip(onehot.data.chunks_exact(k)) {
        if yrow[argmax(prow)] == 1.0 {
            correct += 1;
        }
    }
    Ok((loss, correct as f64 / n as f64))
}
