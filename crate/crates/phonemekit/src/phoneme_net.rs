//! The phoneme classifier architecture: a fixed six-conv / three-dense
//! stack parameterized only by input shape and class count.

use crate::nn::{Activation, LayerSpec, Model};
use crate::Result;

/// Default feature-image input: 81 x 81 grayscale.
pub const DEFAULT_INPUT_SHAPE: [usize; 3] = [81, 81, 1];

/// 6 vowels + 23 consonants + silence.
pub const DEFAULT_NUM_CLASSES: usize = 30;

/// Layer sequence of the classifier.
pub fn phoneme_cnn_specs(num_classes: usize) -> Vec<LayerSpec> {
    let conv = |n_filters, k, s| LayerSpec::Conv2D {
        n_filters,
        kernel: (k, k),
        stride: (s, s),
    };
    let dense = |units, activation, max_norm| LayerSpec::Dense {
        units,
        activation,
        max_norm,
    };
    vec![
        conv(32, 3, 1),
        LayerSpec::Dropout { rate: 0.2 },
        conv(32, 3, 1),
        LayerSpec::MaxPool2D { pool: (3, 3) },
        conv(64, 3, 1),
        LayerSpec::Dropout { rate: 0.2 },
        conv(64, 5, 3),
        LayerSpec::MaxPool2D { pool: (3, 3) },
        conv(128, 5, 3),
        LayerSpec::Dropout { rate: 0.2 },
        conv(128, 5, 3),
        LayerSpec::MaxPool2D { pool: (3, 3) },
        LayerSpec::Flatten,
        LayerSpec::Dropout { rate: 0.5 },
        dense(1024, Activation::Relu, Some(3.0)),
        LayerSpec::Dropout { rate: 0.5 },
        dense(128, Activation::Relu, Some(3.0)),
        LayerSpec::Dropout { rate: 0.6 },
        dense(num_classes, Activation::Softmax, None),
    ]
}

/// Build the classifier with zero-initialized weights; call
/// [`Model::initialize`] with a seeded generator before training.
pub fn build_phoneme_cnn(
    input_shape: [usize; 3],
    num_classes: usize,
    class_labels: Vec<String>,
) -> Result<Model> {
    Model::new(input_shape, &phoneme_cnn_specs(num_classes), class_labels)
}
