//! Forward and backward passes, the cross-entropy loss, prediction,
//! and finite-difference gradient checking.

use super::{
    relu, same_padding, softmax_row, Activation, Conv2D, Layer, Model, Tensor,
};
use crate::dsp::Matrix;
use crate::{Error, Result};
use rand::Rng;

/// Per-layer intermediates retained for [`backward`].
#[derive(Debug)]
pub struct ForwardCache {
    training: bool,
    /// Input tensor of each layer.
    inputs: Vec<Tensor>,
    /// Output tensor of each layer (post-activation).
    outputs: Vec<Tensor>,
    /// For each maxpool layer: flat source index of every output value.
    pool_argmax: Vec<Option<Vec<usize>>>,
    /// For each dropout layer: the inverted mask (0 or 1/(1-rate)).
    dropout_masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    pub fn probs(&self) -> &Tensor {
        self.outputs.last().expect("non-empty model")
    }
}

/// Gradients for one parameterized layer, shaped like its buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parallel to the model's layer list; `None` for parameterless layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub per_layer: Vec<Option<ParamGrads>>,
}

/// C[m x n] += A[m x k] * B[k x n], all row-major.
fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..][..k];
        let orow = &mut out[i * n..][..n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..][..n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// C[k x n] += A^T[k x m] * B[m x n] with A given row-major m x k.
fn matmul_at_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..][..k];
        let brow = &b[i * n..][..n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..][..n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// C[m x k] += A[m x n] * B^T with B given row-major k x n.
fn matmul_bt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..][..n];
        let orow = &mut out[i * k..][..k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..][..n];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

struct ConvGeometry {
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
    /// Patch length kh*kw*in_c.
    k: usize,
}

fn conv_geometry(c: &Conv2D, h: usize, w: usize) -> ConvGeometry {
    let (pad_top, _) = same_padding(h, c.kernel_h, c.stride_h);
    let (pad_left, _) = same_padding(w, c.kernel_w, c.stride_w);
    ConvGeometry {
        oh: h.div_ceil(c.stride_h),
        ow: w.div_ceil(c.stride_w),
        pad_top,
        pad_left,
        k: c.kernel_h * c.kernel_w * c.in_channels,
    }
}

/// Unroll one sample's patches into `cols` (oh*ow rows by k columns);
/// out-of-bounds taps stay zero (same padding).
fn im2col(sample: &[f64], h: usize, w: usize, c: &Conv2D, g: &ConvGeometry, cols: &mut [f64]) {
    cols.fill(0.0);
    let in_c = c.in_channels;
    for oy in 0..g.oh {
        let iy0 = (oy * c.stride_h) as isize - g.pad_top as isize;
        for ox in 0..g.ow {
            let ix0 = (ox * c.stride_w) as isize - g.pad_left as isize;
            let row = (oy * g.ow + ox) * g.k;
            for ky in 0..c.kernel_h {
                let iy = iy0 + ky as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..c.kernel_w {
                    let ix = ix0 + kx as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = ((iy as usize * w) + ix as usize) * in_c;
                    let dst = row + (ky * c.kernel_w + kx) * in_c;
                    cols[dst..dst + in_c].copy_from_slice(&sample[src..src + in_c]);
                }
            }
        }
    }
}

/// Scatter-add of `cols` gradients back onto one sample (im2col adjoint).
fn col2im(cols: &[f64], h: usize, w: usize, c: &Conv2D, g: &ConvGeometry, sample: &mut [f64]) {
    let in_c = c.in_channels;
    for oy in 0..g.oh {
        let iy0 = (oy * c.stride_h) as isize - g.pad_top as isize;
        for ox in 0..g.ow {
            let ix0 = (ox * c.stride_w) as isize - g.pad_left as isize;
            let row = (oy * g.ow + ox) * g.k;
            for ky in 0..c.kernel_h {
                let iy = iy0 + ky as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..c.kernel_w {
                    let ix = ix0 + kx as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = ((iy as usize * w) + ix as usize) * in_c;
                    let src = row + (ky * c.kernel_w + kx) * in_c;
                    for ch in 0..in_c {
                        sample[dst + ch] += cols[src + ch];
                    }
                }
            }
        }
    }
}

/// Inverted dropout mask: each element 0 with probability `rate`,
/// otherwise 1/(1-rate) so the expectation is preserved.
pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Apply the model layer by layer. Dropout draws from `rng` only when
/// `training` is set; the cache feeds [`backward`].
pub fn forward(
    model: &Model,
    batch: &Tensor,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(Tensor, ForwardCache)> {
    let [ih, iw, ic] = model.input_shape;
    if batch.shape.len() != 4 || batch.shape[1..] != [ih, iw, ic] {
        return Err(Error::ShapeMismatch(format!(
            "batch shape {:?} does not match model input {}x{}x{}",
            batch.shape, ih, iw, ic
        )));
    }
    let n = batch.shape[0];
    let mut cache = ForwardCache {
        training,
        inputs: Vec::with_capacity(model.layers.len()),
        outputs: Vec::with_capacity(model.layers.len()),
        pool_argmax: vec![None; model.layers.len()],
        dropout_masks: vec![None; model.layers.len()],
    };
    let mut x = batch.clone();
    for (li, layer) in model.layers.iter().enumerate() {
        let out = match layer {
            Layer::Conv2D(c) => {
                let (h, w) = (x.shape[1], x.shape[2]);
                let g = conv_geometry(c, h, w);
                let m = g.oh * g.ow;
                let mut out = Tensor::zeros(&[n, g.oh, g.ow, c.n_filters]);
                let mut cols = vec![0.0; m * g.k];
                let in_stride = h * w * c.in_channels;
                let out_stride = m * c.n_filters;
                for s in 0..n {
                    im2col(&x.data[s * in_stride..][..in_stride], h, w, c, &g, &mut cols);
                    let o = &mut out.data[s * out_stride..][..out_stride];
                    matmul_acc(&cols, &c.weights, m, g.k, c.n_filters, o);
                    for row in o.chunks_exact_mut(c.n_filters) {
                        for (v, &b) in row.iter_mut().zip(&c.bias) {
                            *v += b;
                        }
                    }
                    relu(o);
                }
                out
            }
            Layer::MaxPool2D { pool_h, pool_w } => {
                let (h, w, ch) = (x.shape[1], x.shape[2], x.shape[3]);
                let oh = h.div_ceil(*pool_h);
                let ow = w.div_ceil(*pool_w);
                let mut out = Tensor::zeros(&[n, oh, ow, ch]);
                let mut argmax = vec![0usize; out.len()];
                let in_stride = h * w * ch;
                for s in 0..n {
                    let base = s * in_stride;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for cc in 0..ch {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_i = 0;
                                for dy in 0..*pool_h {
                                    let iy = oy * pool_h + dy;
                                    if iy >= h {
                                        break;
                                    }
                                    for dx in 0..*pool_w {
                                        let ix = ox * pool_w + dx;
                                        if ix >= w {
                                            break;
                                        }
                                        let idx = base + (iy * w + ix) * ch + cc;
                                        if x.data[idx] > best {
                                            best = x.data[idx];
                                            best_i = idx;
                                        }
                                    }
                                }
                                let oidx = ((s * oh + oy) * ow + ox) * ch + cc;
                                out.data[oidx] = best;
                                argmax[oidx] = best_i;
                            }
                        }
                    }
                }
                cache.pool_argmax[li] = Some(argmax);
                out
            }
            Layer::Dropout { rate } => {
                if training && *rate > 0.0 {
                    let mask = dropout_mask(x.len(), *rate, rng);
                    let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    cache.dropout_masks[li] = Some(mask);
                    Tensor {
                        shape: x.shape.clone(),
                        data,
                    }
                } else {
                    x.clone()
                }
            }
            Layer::Flatten => Tensor {
                shape: vec![n, x.len() / n],
                data: x.data.clone(),
            },
            Layer::Dense(d) => {
                let mut out = Tensor::zeros(&[n, d.units]);
                matmul_acc(&x.data, &d.weights, n, d.in_dim, d.units, &mut out.data);
                for row in out.data.chunks_exact_mut(d.units) {
                    for (v, &b) in row.iter_mut().zip(&d.bias) {
                        *v += b;
                    }
                    match d.activation {
                        Activation::Relu => relu(row),
                        Activation::Softmax => softmax_row(row),
                    }
                }
                out
            }
        };
        cache.inputs.push(x);
        cache.outputs.push(out.clone());
        x = out;
    }
    Ok((x, cache))
}

fn check_onehot(onehot: &Tensor, n: usize, k: usize) -> Result<()> {
    if onehot.shape != [n, k] {
        return Err(Error::ShapeMismatch(format!(
            "onehot shape {:?}, expected [{n}, {k}]",
            onehot.shape
        )));
    }
    for (i, row) in onehot.data.chunks_exact(k).enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Parameter(format!("row {i} is not one-hot")));
        }
    }
    Ok(())
}

/// Mean categorical cross-entropy, -ln floored at probability 1e-12.
pub fn cross_entropy(probs: &Tensor, onehot: &Tensor) -> Result<f64> {
    if probs.shape.len() != 2 {
        return Err(Error::ShapeMismatch("probs must be N x K".into()));
    }
    let (n, k) = (probs.shape[0], probs.shape[1]);
    check_onehot(onehot, n, k)?;
    let mut total = 0.0;
    for (prow, yrow) in probs
        .data
        .chunks_exact(k)
        .zip(onehot.data.chunks_exact(k))
    {
        for (&p, &y) in prow.iter().zip(yrow) {
            if y == 1.0 {
                total -= p.max(1e-12).ln();
            }
        }
    }
    Ok(total / n as f64)
}

/// Gradients of the mean cross-entropy w.r.t. every parameter;
/// requires a cache built with `training = true`.
pub fn backward(model: &Model, cache: &ForwardCache, onehot: &Tensor) -> Result<Gradients> {
    if !cache.training || cache.inputs.len() != model.layers.len() {
        return Err(Error::Parameter(
            "backward requires a training-mode cache for this model".into(),
        ));
    }
    let probs = cache.probs();
    let n = probs.shape[0];
    let k = probs.shape[1];
    check_onehot(onehot, n, k)?;

    // softmax + cross-entropy combined gradient at the final logits
    let mut delta = Tensor {
        shape: probs.shape.clone(),
        data: probs
            .data
            .iter()
            .zip(&onehot.data)
            .map(|(&p, &y)| (p - y) / n as f64)
            .collect(),
    };

    let mut per_layer: Vec<Option<ParamGrads>> = vec![None; model.layers.len()];
    for (li, layer) in model.layers.iter().enumerate().rev() {
        let input = &cache.inputs[li];
        let output = &cache.outputs[li];
        delta = match layer {
            Layer::Dense(d) => {
                if d.activation == Activation::Relu {
                    for (dv, &o) in delta.data.iter_mut().zip(&output.data) {
                        if o == 0.0 {
                            *dv = 0.0;
                        }
                    }
                }
                let mut dw = vec![0.0; d.weights.len()];
                matmul_at_acc(&input.data, &delta.data, n, d.in_dim, d.units, &mut dw);
                let mut db = vec![0.0; d.units];
                for row in delta.data.chunks_exact(d.units) {
                    for (b, &v) in db.iter_mut().zip(row) {
                        *b += v;
                    }
                }
                let mut dx = Tensor::zeros(&input.shape);
                matmul_bt_acc(
                    &delta.data,
                    &d.weights,
                    n,
                    d.in_dim,
                    d.units,
                    &mut dx.data,
                );
                per_layer[li] = Some(ParamGrads {
                    weights: dw,
                    bias: db,
                });
                dx
            }
            Layer::Flatten => Tensor {
                shape: input.shape.clone(),
                data: delta.data.clone(),
            },
            Layer::Dropout { .. } => {
                if let Some(mask) = &cache.dropout_masks[li] {
                    for (dv, &m) in delta.data.iter_mut().zip(mask) {
                        *dv *= m;
                    }
                }
                delta
            }
            Layer::MaxPool2D { .. } => {
                let argmax = cache.pool_argmax[li].as_ref().expect("pool cache");
                let mut dx = Tensor::zeros(&input.shape);
                for (&src, &dv) in argmax.iter().zip(&delta.data) {
                    dx.data[src] += dv;
                }
                dx
            }
            Layer::Conv2D(c) => {
                for (dv, &o) in delta.data.iter_mut().zip(&output.data) {
                    if o == 0.0 {
                        *dv = 0.0;
                    }
                }
                let (h, w) = (input.shape[1], input.shape[2]);
                let g = conv_geometry(c, h, w);
                let m = g.oh * g.ow;
                let mut dw = vec![0.0; c.weights.len()];
                let mut db = vec![0.0; c.n_filters];
                let mut dx = Tensor::zeros(&input.shape);
                let mut cols = vec![0.0; m * g.k];
                let mut dcols = vec![0.0; m * g.k];
                let in_stride = h * w * c.in_channels;
                let out_stride = m * c.n_filters;
                for s in 0..n {
                    let dslice = &delta.data[s * out_stride..][..out_stride];
                    im2col(&input.data[s * in_stride..][..in_stride], h, w, c, &g, &mut cols);
                    matmul_at_acc(&cols, dslice, m, g.k, c.n_filters, &mut dw);
                    for row in dslice.chunks_exact(c.n_filters) {
                        for (b, &v) in db.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    dcols.fill(0.0);
                    matmul_bt_acc(dslice, &c.weights, m, g.k, c.n_filters, &mut dcols);
                    col2im(
                        &dcols,
                        h,
                        w,
                        c,
                        &g,
                        &mut dx.data[s * in_stride..][..in_stride],
                    );
                }
                per_layer[li] = Some(ParamGrads {
                    weights: dw,
                    bias: db,
                });
                dx
            }
        };
    }
    Ok(Gradients { per_layer })
}

/// Inference: forward with dropout inactive, chunked to bound memory.
/// Returns N x K probability rows.
pub fn predict(model: &Model, batch: &Tensor) -> Result<Matrix> {
    let n = batch.shape[0];
    let sample_len = batch.len() / n.max(1);
    let k = model.output_width();
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(32) {
        let end = (start + 32).min(n);
        let mut shape = batch.shape.clone();
        shape[0] = end - start;
        let chunk = Tensor {
            shape,
            data: batch.data[start * sample_len..end * sample_len].to_vec(),
        };
        let (probs, _) = forward(model, &chunk, false, &mut rng)?;
        for row in probs.data.chunks_exact(k) {
            out.push(row.to_vec());
        }
    }
    Ok(out)
}

fn loss_of(model: &Model, batch: &Tensor, onehot: &Tensor) -> Result<f64> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let (probs, _) = forward(model, batch, true, &mut rng)?;
    cross_entropy(&probs, onehot)
}

/// Central-finite-difference check of [`backward`]; dropout rates are
/// zeroed in a cloned model so the loss surface is deterministic.
/// Returns the maximum relative error over every parameter.
pub fn gradient_check(model: &Model, batch: &Tensor, onehot: &Tensor, eps: f64) -> Result<f64> {
    gradient_check_sampled(model, batch, onehot, eps, usize::MAX, 0)
}

/// [`gradient_check`] restricted to at most `max_per_group` randomly
/// chosen parameters per weight and bias array; makes finite
/// differences tractable for layers with hundreds of thousands of
/// parameters.
pub fn gradient_check_sampled(
    model: &Model,
    batch: &Tensor,
    onehot: &Tensor,
    eps: f64,
    max_per_group: usize,
    seed: u64,
) -> Result<f64> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut pick_rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut m = model.clone();
    for layer in &mut m.layers {
        if let Layer::Dropout { rate } = layer {
            *rate = 0.0;
        }
    }
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let (_, cache) = forward(&m, batch, true, &mut rng)?;
    let grads = backward(&m, &cache, onehot)?;
    let mut max_rel: f64 = 0.0;
    for li in 0..m.layers.len() {
        let Some(pg) = &grads.per_layer[li] else {
            continue;
        };
        let analytic: Vec<(bool, Vec<f64>)> =
            vec![(false, pg.weights.clone()), (true, pg.bias.clone())];
        for (is_bias, grad) in analytic {
            let mut indices: Vec<usize> = (0..grad.len()).collect();
            if grad.len() > max_per_group {
                indices.shuffle(&mut pick_rng);
                indices.truncate(max_per_group);
            }
            for idx in indices {
                let g = grad[idx];
                let orig = read_param(&m, li, is_bias, idx);
                write_param(&mut m, li, is_bias, idx, orig + eps);
                let lp = loss_of(&m, batch, onehot)?;
                write_param(&mut m, li, is_bias, idx, orig - eps);
                let lm = loss_of(&m, batch, onehot)?;
                write_param(&mut m, li, is_bias, idx, orig);
                let fd = (lp - lm) / (2.0 * eps);
                let rel = (fd - g).abs() / (fd.abs() + g.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
    }
    Ok(max_rel)
}

fn read_param(m: &Model, li: usize, is_bias: bool, idx: usize) -> f64 {
    match &m.layers[li] {
        Layer::Conv2D(c) => {
            if is_bias {
                c.bias[idx]
            } else {
                c.weights[idx]
            }
        }
        Layer::Dense(d) => {
            if is_bias {
                d.bias[idx]
            } else {
                d.weights[idx]
            }
        }
        _ => unreachable!("parameterless layer"),
    }
}

fn write_param(m: &mut Model, li: usize, is_bias: bool, idx: usize, v: f64) {
    match &mut m.layers[li] {
        Layer::Conv2D(c) => {
            if is_bias {
                c.bias[idx] = v;
            } else {
                c.weights[idx] = v;
            }
        }
        Layer::Dense(d) => {
            if is_bias {
                d.bias[idx] = v;
            } else {
                d.weights[idx] = v;
            }
        }
        _ => unreachable!("parameterless layer"),
    }
}
