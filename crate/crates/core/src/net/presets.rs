//! Desk-scale architectural presets.
//!
//! Each preset keeps its family's signature mechanism (plain stack, deep 3x3
//! stack, inception branches, residual connections, fire modules) at sizes
//! that train in seconds on a CPU. All convolutions and pools run in valid
//! mode, so inception-style branches end in stride-1 pools that align their
//! spatial dims, and residual blocks use 1x1 convolutions to preserve shape.
//!
//! The feature cut point is the final layer: a 64-wide dense layer followed
//! by ReLU.

use crate::error::{Error, Result};
use crate::tensor::Stride;

use super::{infer_shapes, LayerSpec, NetworkSpec};

pub const PRESET_NAMES: [&str; 5] = [
    "alexnet-mini",
    "vgg-mini",
    "googlenet-mini",
    "resnet-mini",
    "squeezenet-mini",
];

fn conv(out_channels: usize, k: usize, z: usize) -> LayerSpec {
    LayerSpec::Conv {
        out_channels,
        kernel_h: k,
        kernel_w: k,
        stride: Stride::new(z).expect("preset strides are >= 1"),
    }
}

fn pool(window: usize, z: usize) -> LayerSpec {
    LayerSpec::MaxPool {
        window,
        stride: Stride::new(z).expect("preset strides are >= 1"),
    }
}

fn tail(layers: &mut Vec<LayerSpec>) {
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense { out_dim: 64 });
    layers.push(LayerSpec::Relu);
}

fn alexnet_stem() -> Vec<LayerSpec> {
    vec![
        conv(16, 5, 2),
        LayerSpec::Relu,
        pool(2, 2),
        conv(32, 3, 1),
        LayerSpec::Relu,
        pool(2, 2),
    ]
}

fn alexnet_mini() -> Vec<LayerSpec> {
    let mut layers = alexnet_stem();
    tail(&mut layers);
    layers
}

fn vgg_mini() -> Vec<LayerSpec> {
    let mut layers = vec![
        conv(8, 3, 1),
        LayerSpec::Relu,
        conv(8, 3, 1),
        LayerSpec::Relu,
        pool(2, 2),
        conv(16, 3, 1),
        LayerSpec::Relu,
        conv(16, 3, 1),
        LayerSpec::Relu,
        pool(2, 2),
    ];
    tail(&mut layers);
    layers
}

fn resnet_mini() -> Vec<LayerSpec> {
    let block = || LayerSpec::Residual {
        inner: vec![conv(32, 1, 1), LayerSpec::Relu, conv(32, 1, 1)],
    };
    let mut layers = alexnet_stem();
    layers.push(block());
    layers.push(block());
    tail(&mut layers);
    layers
}

fn googlenet_mini() -> Vec<LayerSpec> {
    // Branch outputs all land on (H-4) x (W-4): 1x1 and pool-project branches
    // finish with a 5-wide stride-1 pool, the 3x3 branch with a 3-wide one.
    let inception = LayerSpec::InceptionBlock {
        branches: vec![
            vec![conv(8, 1, 1), LayerSpec::Relu, pool(5, 1)],
            vec![conv(8, 1, 1), LayerSpec::Relu, conv(12, 3, 1), LayerSpec::Relu, pool(3, 1)],
            vec![conv(4, 1, 1), LayerSpec::Relu, conv(8, 5, 1), LayerSpec::Relu],
            vec![pool(5, 1), conv(8, 1, 1), LayerSpec::Relu],
        ],
    };
    let mut layers = vec![conv(16, 5, 2), LayerSpec::Relu, pool(2, 2), inception];
    tail(&mut layers);
    layers
}

fn squeezenet_mini() -> Vec<LayerSpec> {
    let fire = || LayerSpec::Fire {
        squeeze_channels: 8,
        expand_channels: 16,
    };
    let mut layers = vec![conv(16, 5, 2), LayerSpec::Relu, pool(2, 2), fire(), fire(), pool(2, 2)];
    tail(&mut layers);
    layers
}

/// Builds one of the named presets for the given input shape. `class_count`
/// is carried by the training head, not the spec, but is validated here so
/// misconfigurations surface early.
pub fn preset(name: &str, input_shape: [usize; 3], class_count: usize) -> Result<NetworkSpec> {
    if class_count < 2 {
        return Err(Error::InvalidArgument("class_count must be >= 2".into()));
    }
    if input_shape[1] < 32 || input_shape[2] < 32 {
        return Err(Error::InvalidArgument(format!(
            "presets need spatial dims >= 32, got {}x{}",
            input_shape[1], input_shape[2]
        )));
    }
    let layers = match name {
        "alexnet-mini" => alexnet_mini(),
        "vgg-mini" => vgg_mini(),
        "googlenet-mini" => googlenet_mini(),
        "resnet-mini" => resnet_mini(),
        "squeezenet-mini" => squeezenet_mini(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected one of {PRESET_NAMES:?})"
            )))
        }
    };
    let cut_index = layers.len() - 1;
    let spec = NetworkSpec {
        input_shape,
        layers,
        cut_index,
    };
    infer_shapes(&spec)?;
    Ok(spec)
}
