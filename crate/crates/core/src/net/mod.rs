//! Layer and network specification, forward/backward execution, training,
//! weight persistence, and the desk-scale architectural presets.

mod exec;
mod presets;
mod train;
mod weights;

pub use exec::{backward, extract_features, forward, kink_margin};
pub use presets::{preset, PRESET_NAMES};
pub use train::{init_weights, sgd_train, EpochStats, TrainRun};
pub use weights::{
    load_tensor_container, load_weights, save_tensor_container, save_weights, TensorContainer,
    TensorEntry, WEIGHT_FILE_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Stride, Tensor};

/// One layer of a network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: Stride,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: Stride,
    },
    Flatten,
    Dense {
        out_dim: usize,
    },
    /// `output = input + inner(input)`; the inner chain must preserve shape.
    Residual {
        inner: Vec<LayerSpec>,
    },
    /// Parallel branches concatenated along the channel axis; every branch
    /// must produce the same spatial dims.
    InceptionBlock {
        branches: Vec<Vec<LayerSpec>>,
    },
    /// Squeeze (1x1 conv) followed by 1x1 and 3x3 expand branches whose
    /// outputs are channel-concatenated. The 1x1 branch is aligned to the
    /// 3x3 branch's valid-mode output by a 3x3 stride-1 max pool.
    Fire {
        squeeze_channels: usize,
        expand_channels: usize,
    },
}

/// Ordered layer list plus the cut point whose activation is the feature
/// vector fed to a classifier head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub cut_index: usize,
}

/// Learned parameters mirroring the structure of one [`LayerSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    None,
    Conv { weight: Tensor, bias: Tensor },
    Dense { weight: Tensor, bias: Tensor },
    Seq(Vec<LayerParams>),
    Branches(Vec<Vec<LayerParams>>),
    Fire {
        squeeze: Box<LayerParams>,
        expand1x1: Box<LayerParams>,
        expand3x3: Box<LayerParams>,
    },
}

/// A spec together with its parameters; the transferable feature extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedNetwork {
    pub spec: NetworkSpec,
    pub params: Vec<LayerParams>,
    pub provenance: String,
}

/// Gradient-training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Leading layers excluded from parameter updates.
    pub freeze_prefix: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 16,
            seed: 0,
            freeze_prefix: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, layer_count: usize) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be finite and >= 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.freeze_prefix > layer_count {
            return Err(Error::InvalidArgument(format!(
                "freeze_prefix {} exceeds layer count {layer_count}",
                self.freeze_prefix
            )));
        }
        Ok(())
    }
}

fn spec_err(layer: usize, reason: impl Into<String>) -> Error {
    Error::Spec {
        layer,
        reason: reason.into(),
    }
}

/// Shape produced by one layer given its input shape. `layer` is the
/// top-level index used in error messages.
pub(crate) fn layer_output_shape(layer: usize, spec: &LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    match spec {
        LayerSpec::Conv {
            out_channels,
            kernel_h,
            kernel_w,
            stride,
        } => {
            if input.len() != 3 {
                return Err(spec_err(layer, "conv expects a C x H x W input"));
            }
            let (h, w) = (input[1], input[2]);
            if *out_channels < 1 || *kernel_h < 1 || *kernel_w < 1 {
                return Err(spec_err(layer, "conv dimensions must be >= 1"));
            }
            if *kernel_h > h || *kernel_w > w {
                return Err(spec_err(
                    layer,
                    format!("kernel {kernel_h}x{kernel_w} exceeds input {h}x{w}"),
                ));
            }
            Ok(vec![
                *out_channels,
                crate::tensor::valid_out_len(h, *kernel_h, *stride),
                crate::tensor::valid_out_len(w, *kernel_w, *stride),
            ])
        }
        LayerSpec::Relu => Ok(input.to_vec()),
        LayerSpec::MaxPool { window, stride } => {
            if input.len() != 3 {
                return Err(spec_err(layer, "max pool expects a C x H x W input"));
            }
            let (h, w) = (input[1], input[2]);
            if *window < 1 {
                return Err(spec_err(layer, "pool window must be >= 1"));
            }
            if *window > h || *window > w {
                return Err(spec_err(
                    layer,
                    format!("pool window {window} exceeds input {h}x{w}"),
                ));
            }
            Ok(vec![
                input[0],
                crate::tensor::valid_out_len(h, *window, *stride),
                crate::tensor::valid_out_len(w, *window, *stride),
            ])
        }
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Dense { out_dim } => {
            if input.len() != 1 {
                return Err(spec_err(layer, "dense expects a rank-1 input"));
            }
            if *out_dim < 1 {
                return Err(spec_err(layer, "dense output dim must be >= 1"));
            }
            Ok(vec![*out_dim])
        }
        LayerSpec::Residual { inner } => {
            let mut shape = input.to_vec();
            for step in inner {
                shape = layer_output_shape(layer, step, &shape)?;
            }
            if shape != input {
                return Err(spec_err(
                    layer,
                    format!(
                        "residual inner output {shape:?} does not match its input {input:?}"
                    ),
                ));
            }
            Ok(shape)
        }
        LayerSpec::InceptionBlock { branches } => {
            if branches.is_empty() {
                return Err(spec_err(layer, "inception block needs >= 1 branch"));
            }
            let mut spatial: Option<(usize, usize)> = None;
            let mut channels = 0;
            for branch in branches {
                let mut shape = input.to_vec();
                for step in branch {
                    shape = layer_output_shape(layer, step, &shape)?;
                }
                if shape.len() != 3 {
                    return Err(spec_err(layer, "inception branches must stay rank-3"));
                }
                match spatial {
                    None => spatial = Some((shape[1], shape[2])),
                    Some(dims) if dims != (shape[1], shape[2]) => {
                        return Err(spec_err(
                            layer,
                            format!(
                                "branch spatial dims {}x{} differ from {}x{}",
                                shape[1], shape[2], dims.0, dims.1
                            ),
                        ));
                    }
                    _ => {}
                }
                channels += shape[0];
            }
            let (h, w) = spatial.unwrap();
            Ok(vec![channels, h, w])
        }
        LayerSpec::Fire {
            squeeze_channels,
            expand_channels,
        } => {
            if *squeeze_channels < 1 || *expand_channels < 1 {
                return Err(spec_err(layer, "fire channel counts must be >= 1"));
            }
            if input.len() != 3 {
                return Err(spec_err(layer, "fire expects a C x H x W input"));
            }
            let (h, w) = (input[1], input[2]);
            if h < 3 || w < 3 {
                return Err(spec_err(
                    layer,
                    format!("fire needs spatial extent >= 3, got {h}x{w}"),
                ));
            }
            Ok(vec![2 * expand_channels, h - 2, w - 2])
        }
    }
}

/// Computes the output shape of every layer, or fails naming the first
/// offending layer index.
pub fn infer_shapes(spec: &NetworkSpec) -> Result<Vec<Vec<usize>>> {
    if spec.layers.is_empty() {
        return Err(spec_err(0, "network has no layers"));
    }
    if spec.cut_index >= spec.layers.len() {
        return Err(spec_err(
            spec.cut_index,
            format!(
                "cut_index {} out of range for {} layers",
                spec.cut_index,
                spec.layers.len()
            ),
        ));
    }
    let mut shapes = Vec::with_capacity(spec.layers.len());
    let mut current: Vec<usize> = spec.input_shape.to_vec();
    for (idx, layer) in spec.layers.iter().enumerate() {
        current = layer_output_shape(idx, layer, &current)?;
        shapes.push(current.clone());
    }
    let last = shapes.last().unwrap();
    if last.len() != 1 {
        return Err(spec_err(
            spec.layers.len() - 1,
            format!("final layer must produce a rank-1 tensor, got {last:?}"),
        ));
    }
    Ok(shapes)
}

/// Feature dimension at the cut point (the flattened activation length).
pub fn feature_dim(spec: &NetworkSpec) -> Result<usize> {
    let shapes = infer_shapes(spec)?;
    Ok(shapes[spec.cut_index].iter().product())
}

/// Parameter tensor shapes for one layer, mirroring [`LayerParams`].
/// Returns the layer's output shape.
fn layer_param_shapes(
    layer: usize,
    spec: &LayerSpec,
    input: &[usize],
    prefix: &str,
    out: &mut Vec<(String, Vec<usize>)>,
) -> Result<Vec<usize>> {
    match spec {
        LayerSpec::Conv {
            out_channels,
            kernel_h,
            kernel_w,
            ..
        } => {
            out.push((
                format!("{prefix}.weight"),
                vec![*out_channels, input[0], *kernel_h, *kernel_w],
            ));
            out.push((format!("{prefix}.bias"), vec![*out_channels]));
        }
        LayerSpec::Dense { out_dim } => {
            out.push((format!("{prefix}.weight"), vec![*out_dim, input[0]]));
            out.push((format!("{prefix}.bias"), vec![*out_dim]));
        }
        LayerSpec::Residual { inner } => {
            let mut shape = input.to_vec();
            for (j, step) in inner.iter().enumerate() {
                let child = format!("{prefix}.inner.{j}");
                layer_param_shapes(layer, step, &shape, &child, out)?;
                shape = layer_output_shape(layer, step, &shape)?;
            }
        }
        LayerSpec::InceptionBlock { branches } => {
            for (b, branch) in branches.iter().enumerate() {
                let mut shape = input.to_vec();
                for (j, step) in branch.iter().enumerate() {
                    let child = format!("{prefix}.branches.{b}.{j}");
                    layer_param_shapes(layer, step, &shape, &child, out)?;
                    shape = layer_output_shape(layer, step, &shape)?;
                }
            }
        }
        LayerSpec::Fire {
            squeeze_channels,
            expand_channels,
        } => {
            out.push((
                format!("{prefix}.squeeze.weight"),
                vec![*squeeze_channels, input[0], 1, 1],
            ));
            out.push((format!("{prefix}.squeeze.bias"), vec![*squeeze_channels]));
            out.push((
                format!("{prefix}.expand1x1.weight"),
                vec![*expand_channels, *squeeze_channels, 1, 1],
            ));
            out.push((format!("{prefix}.expand1x1.bias"), vec![*expand_channels]));
            out.push((
                format!("{prefix}.expand3x3.weight"),
                vec![*expand_channels, *squeeze_channels, 3, 3],
            ));
            out.push((format!("{prefix}.expand3x3.bias"), vec![*expand_channels]));
        }
        LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Flatten => {}
    }
    layer_output_shape(layer, spec, input)
}

/// Flat `(name, shape)` list of every parameter tensor in declaration order.
pub fn param_shapes(spec: &NetworkSpec) -> Result<Vec<(String, Vec<usize>)>> {
    infer_shapes(spec)?;
    let mut out = Vec::new();
    let mut shape: Vec<usize> = spec.input_shape.to_vec();
    for (idx, layer) in spec.layers.iter().enumerate() {
        let prefix = format!("layers.{idx}");
        shape = layer_param_shapes(idx, layer, &shape, &prefix, &mut out)?;
    }
    Ok(out)
}

impl LayerParams {
    /// Visits every tensor in declaration order.
    pub fn for_each_tensor<'a>(&'a self, visit: &mut impl FnMut(&'a Tensor)) {
        match self {
            LayerParams::None => {}
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                visit(weight);
                visit(bias);
            }
            LayerParams::Seq(items) => {
                for item in items {
                    item.for_each_tensor(visit);
                }
            }
            LayerParams::Branches(branches) => {
                for branch in branches {
                    for item in branch {
                        item.for_each_tensor(visit);
                    }
                }
            }
            LayerParams::Fire {
                squeeze,
                expand1x1,
                expand3x3,
            } => {
                squeeze.for_each_tensor(visit);
                expand1x1.for_each_tensor(visit);
                expand3x3.for_each_tensor(visit);
            }
        }
    }

    /// Mutable visit in the same declaration order.
    pub fn for_each_tensor_mut(&mut self, visit: &mut impl FnMut(&mut Tensor)) {
        match self {
            LayerParams::None => {}
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                visit(weight);
                visit(bias);
            }
            LayerParams::Seq(items) => {
                for item in items {
                    item.for_each_tensor_mut(visit);
                }
            }
            LayerParams::Branches(branches) => {
                for branch in branches {
                    for item in branch {
                        item.for_each_tensor_mut(visit);
                    }
                }
            }
            LayerParams::Fire {
                squeeze,
                expand1x1,
                expand3x3,
            } => {
                squeeze.for_each_tensor_mut(visit);
                expand1x1.for_each_tensor_mut(visit);
                expand3x3.for_each_tensor_mut(visit);
            }
        }
    }
}

impl TrainedNetwork {
    /// All parameter tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.params {
            layer.for_each_tensor(&mut |t| out.push(t));
        }
        out
    }

    /// Checks parameter shapes against the spec and finiteness of values.
    pub fn validate(&self) -> Result<()> {
        let expected = param_shapes(&self.spec)?;
        let actual = self.tensors();
        if expected.len() != actual.len() {
            return Err(Error::ShapeInconsistency(format!(
                "spec declares {} parameter tensors, network has {}",
                expected.len(),
                actual.len()
            )));
        }
        for ((name, shape), tensor) in expected.iter().zip(&actual) {
            if tensor.shape() != shape.as_slice() {
                return Err(Error::ShapeInconsistency(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    tensor.shape()
                )));
            }
            if !tensor.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} contains non-finite values"
                )));
            }
        }
        Ok(())
    }
}
