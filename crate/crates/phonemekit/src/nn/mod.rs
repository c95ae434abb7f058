//! From-scratch feed-forward network engine: NHWC tensors, the five
//! layer kinds (Conv2D, MaxPool2D, Dropout, Flatten, Dense),
//! backpropagation, three optimizers, the max-norm constraint, a
//! training loop, gradient checking, and model persistence.

mod backprop;
mod optim;
mod persist;
mod train;

pub use backprop::{
    backward, cross_entropy, forward, gradient_check, gradient_check_sampled, predict,
    ForwardCache, Gradients, ParamGrads,
};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState};
pub use persist::{load_model, save_model, MODEL_VERSION};
pub use train::{fit, EpochStats, History, TrainConfig};

use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major tensor of up to 4 dims (batch, height, width,
/// channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape:?} (need {expect})",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

/// Convolution with same padding and a fixed relu activation.
/// Weights are kh x kw x in_c x out_c row-major; bias is out_c.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2D {
    pub n_filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub in_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Fully connected layer; weights are in_dim x units row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub units: usize,
    pub activation: Activation,
    pub max_norm: Option<f64>,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2D(Conv2D),
    MaxPool2D { pool_h: usize, pool_w: usize },
    Dropout { rate: f64 },
    Flatten,
    Dense(Dense),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2D(_) => "conv2d",
            Layer::MaxPool2D { .. } => "maxpool2d",
            Layer::Dropout { .. } => "dropout",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2D(c) => c.weights.len() + c.bias.len(),
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            _ => 0,
        }
    }
}

/// Architecture description used to build a [`Model`]; weight shapes
/// are inferred during shape propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv2D {
        n_filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    },
    MaxPool2D {
        pool: (usize, usize),
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
        max_norm: Option<f64>,
    },
}

/// Per-layer output shape after propagation: spatial until Flatten,
/// flat afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageShape {
    Spatial { h: usize, w: usize, c: usize },
    Flat { width: usize },
}

/// Same-padding output length: ceil(in / stride).
pub fn conv_out_len(input: usize, stride: usize) -> usize {
    input.div_ceil(stride)
}

/// Total same-padding for one axis, split floor-before / ceil-after.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = conv_out_len(input, stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (total / 2, total - total / 2)
}

/// Ceil-mode pooling output length.
pub fn pool_out_len(input: usize, pool: usize) -> usize {
    input.div_ceil(pool)
}

/// Sequential model with shapes validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub input_shape: [usize; 3],
    pub layers: Vec<Layer>,
    pub class_labels: Vec<String>,
}

impl Model {
    /// Build a model from layer specs, propagating shapes to size the
    /// weight buffers (zero-initialized; see [`Model::initialize`]).
    pub fn new(
        input_shape: [usize; 3],
        specs: &[LayerSpec],
        class_labels: Vec<String>,
    ) -> Result<Self> {
        if input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Parameter(format!(
                "input shape {input_shape:?} has a zero dim"
            )));
        }
        if specs.is_empty() {
            return Err(Error::Parameter("model needs at least one layer".into()));
        }
        let mut shape = StageShape::Spatial {
            h: input_shape[0],
            w: input_shape[1],
            c: input_shape[2],
        };
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let stage = |msg: String| Error::ShapeMismatch(format!("layer {i}: {msg}"));
            match (spec, &shape) {
                (
                    LayerSpec::Conv2D {
                        n_filters,
                        kernel,
                        stride,
                    },
                    StageShape::Spatial { h, w, c },
                ) => {
                    if *n_filters == 0 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0
                        || stride.1 == 0
                    {
                        return Err(stage("conv2d hyperparameters must be >= 1".into()));
                    }
                    let wlen = kernel.0 * kernel.1 * c * n_filters;
                    layers.push(Layer::Conv2D(Conv2D {
                        n_filters: *n_filters,
                        kernel_h: kernel.0,
                        kernel_w: kernel.1,
                        stride_h: stride.0,
                        stride_w: stride.1,
                        in_channels: *c,
                        weights: vec![0.0; wlen],
                        bias: vec![0.0; *n_filters],
                    }));
                    shape = StageShape::Spatial {
                        h: conv_out_len(*h, stride.0),
                        w: conv_out_len(*w, stride.1),
                        c: *n_filters,
                    };
                }
                (LayerSpec::MaxPool2D { pool }, StageShape::Spatial { h, w, c }) => {
                    if pool.0 == 0 || pool.1 == 0 {
                        return Err(stage("pool size must be >= 1".into()));
                    }
                    // ceil mode allows a window larger than the map;
                    // partial windows pool over the valid region
                    layers.push(Layer::MaxPool2D {
                        pool_h: pool.0,
                        pool_w: pool.1,
                    });
                    shape = StageShape::Spatial {
                        h: pool_out_len(*h, pool.0),
                        w: pool_out_len(*w, pool.1),
                        c: *c,
                    };
                }
                (LayerSpec::Dropout { rate }, _) => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::Parameter(format!(
                            "layer {i}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    layers.push(Layer::Dropout { rate: *rate });
                }
                (LayerSpec::Flatten, StageShape::Spatial { h, w, c }) => {
                    layers.push(Layer::Flatten);
                    shape = StageShape::Flat { width: h * w * c };
                }
                (
                    LayerSpec::Dense {
                        units,
                        activation,
                        max_norm,
                    },
                    StageShape::Flat { width },
                ) => {
                    if *units == 0 {
                        return Err(stage("dense units must be >= 1".into()));
                    }
                    if let Some(b) = max_norm {
                        if !(*b > 0.0) {
                            return Err(Error::Parameter(format!(
                                "layer {i}: max_norm bound must be positive"
                            )));
                        }
                    }
                    layers.push(Layer::Dense(Dense {
                        units: *units,
                        activation: *activation,
                        max_norm: *max_norm,
                        in_dim: *width,
                        weights: vec![0.0; width * units],
                        bias: vec![0.0; *units],
                    }));
                    shape = StageShape::Flat { width: *units };
                }
                (LayerSpec::Dense { .. }, StageShape::Spatial { .. }) => {
                    return Err(stage("dense requires a flattened input".into()));
                }
                (_, StageShape::Flat { .. }) => {
                    return Err(stage(format!(
                        "{} cannot follow flatten",
                        match spec {
                            LayerSpec::Conv2D { .. } => "conv2d",
                            LayerSpec::MaxPool2D { .. } => "maxpool2d",
                            _ => unreachable!(),
                        }
                    )));
                }
            }
        }
        match layers.last() {
            Some(Layer::Dense(d)) if d.activation == Activation::Softmax => {}
            _ => {
                return Err(Error::Parameter(
                    "final layer must be a softmax Dense".into(),
                ))
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if let Layer::Dense(d) = layer {
                if d.activation == Activation::Softmax && i + 1 != layers.len() {
                    return Err(Error::Parameter(format!(
                        "layer {i}: softmax allowed only on the final layer"
                    )));
                }
            }
        }
        Ok(Self {
            input_shape,
            layers,
            class_labels,
        })
    }

    /// He-uniform init for relu layers, Glorot-uniform for the softmax
    /// Dense; biases stay zero. Sampling order is the weight
    /// declaration order, so a fixed seed gives fixed parameters.
    pub fn initialize(&mut self, rng: &mut impl Rng) {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2D(c) => {
                    let fan_in = (c.kernel_h * c.kernel_w * c.in_channels) as f64;
                    let limit = (6.0 / fan_in).sqrt();
                    for w in &mut c.weights {
                        *w = rng.gen_range(-limit..limit);
                    }
                }
                Layer::Dense(d) => {
                    let limit = match d.activation {
                        Activation::Relu => (6.0 / d.in_dim as f64).sqrt(),
                        Activation::Softmax => {
                            (6.0 / (d.in_dim + d.units) as f64).sqrt()
                        }
                    };
                    for w in &mut d.weights {
                        *w = rng.gen_range(-limit..limit);
                    }
                }
                _ => {}
            }
        }
    }

    /// Output shape after each layer, in order.
    pub fn shape_trace(&self) -> Vec<StageShape> {
        let mut shape = StageShape::Spatial {
            h: self.input_shape[0],
            w: self.input_shape[1],
            c: self.input_shape[2],
        };
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = match (layer, &shape) {
                (Layer::Conv2D(cv), StageShape::Spatial { h, w, .. }) => StageShape::Spatial {
                    h: conv_out_len(*h, cv.stride_h),
                    w: conv_out_len(*w, cv.stride_w),
                    c: cv.n_filters,
                },
                (Layer::MaxPool2D { pool_h, pool_w }, StageShape::Spatial { h, w, c }) => {
                    StageShape::Spatial {
                        h: pool_out_len(*h, *pool_h),
                        w: pool_out_len(*w, *pool_w),
                        c: *c,
                    }
                }
                (Layer::Dropout { .. }, s) => s.clone(),
                (Layer::Flatten, StageShape::Spatial { h, w, c }) => {
                    StageShape::Flat { width: h * w * c }
                }
                (Layer::Dense(d), StageShape::Flat { .. }) => {
                    StageShape::Flat { width: d.units }
                }
                // Model::new ruled these out.
                _ => unreachable!("invalid layer/shape pairing"),
            };
            trace.push(shape.clone());
        }
        trace
    }

    pub fn output_width(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d.units,
            _ => unreachable!("model always ends in dense"),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Spec used to rebuild this architecture (persistence descriptor).
    pub fn to_specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv2D(c) => LayerSpec::Conv2D {
                    n_filters: c.n_filters,
                    kernel: (c.kernel_h, c.kernel_w),
                    stride: (c.stride_h, c.stride_w),
                },
                Layer::MaxPool2D { pool_h, pool_w } => LayerSpec::MaxPool2D {
                    pool: (*pool_h, *pool_w),
                },
                Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
                Layer::Flatten => LayerSpec::Flatten,
                Layer::Dense(d) => LayerSpec::Dense {
                    units: d.units,
                    activation: d.activation,
                    max_norm: d.max_norm,
                },
            })
            .collect()
    }
}

/// Elementwise max(x, 0).
pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Numerically stable row-wise softmax over a flat row.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Scale every column of an in x out matrix whose L2 norm exceeds
/// `bound` down to exactly `bound`; idempotent.
pub fn apply_max_norm(weights: &mut [f64], in_dim: usize, out_dim: usize, bound: f64) {
    debug_assert_eq!(weights.len(), in_dim * out_dim);
    for j in 0..out_dim {
        let mut sq = 0.0;
        for i in 0..in_dim {
            let w = weights[i * out_dim + j];
            sq += w * w;
        }
        let norm = sq.sqrt();
        // tiny relative slack keeps the projection idempotent in floats
        if norm > bound * (1.0 + 1e-12) {
            let s = bound / norm;
            for i in 0..in_dim {
                weights[i * out_dim + j] *= s;
            }
        }
    }
}

#[cfg(test)]
pub(crate) fn tiny_specs(num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2D {
            n_filters: 3,
            kernel: (3, 3),
            stride: (1, 1),
        },
        LayerSpec::MaxPool2D { pool: (2, 2) },
        LayerSpec::Conv2D {
            n_filters: 4,
            kernel: (3, 3),
            stride: (2, 2),
        },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            units: 8,
            activation: Activation::Relu,
            max_norm: Some(3.0),
        },
        LayerSpec::Dense {
            units: num_classes,
            activation: Activation::Softmax,
            max_norm: None,
        },
    ]
}
