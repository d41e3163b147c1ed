//! Forward and reverse-mode execution of layer chains.
//!
//! Composite layers (residual, inception, fire) are executed by recursing
//! into the same chain machinery that runs the top-level network, so every
//! layer kind shares one forward and one backward implementation.

use crate::error::{Error, Result};
use crate::tensor::{self, Stride, Tensor};

use super::{LayerParams, LayerSpec, TrainedNetwork};

static NO_PARAMS: LayerParams = LayerParams::None;

fn stride_one() -> Stride {
    Stride::new(1).expect("1 is a valid stride")
}

/// Per-step record kept by the forward pass for the backward pass.
pub(crate) struct StepTrace {
    /// The tensor this step consumed.
    pub input: Tensor,
    pub trace: Trace,
}

pub(crate) enum Trace {
    Primitive,
    Residual(Vec<StepTrace>),
    Inception {
        branches: Vec<Vec<StepTrace>>,
        branch_channels: Vec<usize>,
    },
    Fire {
        stem: Vec<StepTrace>,
        stem_out: Tensor,
        expand1: Vec<StepTrace>,
        expand3: Vec<StepTrace>,
        expand_channels: usize,
    },
}

/// The three convolutions a fire module is made of, as primitive specs.
fn fire_sub_specs(squeeze_channels: usize, expand_channels: usize) -> [LayerSpec; 3] {
    let conv = |out_channels, k| LayerSpec::Conv {
        out_channels,
        kernel_h: k,
        kernel_w: k,
        stride: stride_one(),
    };
    [
        conv(squeeze_channels, 1),
        conv(expand_channels, 1),
        conv(expand_channels, 3),
    ]
}

pub(crate) fn forward_layer(
    spec: &LayerSpec,
    params: &LayerParams,
    input: &Tensor,
) -> Result<(Tensor, Trace)> {
    match (spec, params) {
        (LayerSpec::Conv { stride, .. }, LayerParams::Conv { weight, bias }) => {
            let out = tensor::conv_valid_2d(input, weight, bias, *stride)?;
            Ok((out, Trace::Primitive))
        }
        (LayerSpec::Relu, _) => Ok((tensor::relu(input), Trace::Primitive)),
        (LayerSpec::MaxPool { window, stride }, _) => {
            Ok((tensor::max_pool_2d(input, *window, *stride)?, Trace::Primitive))
        }
        (LayerSpec::Flatten, _) => Ok((input.flatten(), Trace::Primitive)),
        (LayerSpec::Dense { .. }, LayerParams::Dense { weight, bias }) => {
            if input.rank() != 1 {
                return Err(Error::ShapeMismatch("dense layer expects rank-1 input".into()));
            }
            let (k, d) = (weight.shape()[0], weight.shape()[1]);
            if input.len() != d {
                return Err(Error::ShapeMismatch(format!(
                    "dense expects input length {d}, got {}",
                    input.len()
                )));
            }
            let mut out = vec![0.0; k];
            for (row, slot) in out.iter_mut().enumerate() {
                let mut acc = bias.data()[row];
                for col in 0..d {
                    acc += weight.data()[row * d + col] * input.data()[col];
                }
                *slot = acc;
            }
            Ok((Tensor::from_vec(out), Trace::Primitive))
        }
        (LayerSpec::Residual { inner }, LayerParams::Seq(inner_params)) => {
            let steps: Vec<(&LayerSpec, &LayerParams)> =
                inner.iter().zip(inner_params.iter()).collect();
            let (inner_out, trace) = forward_chain(&steps, input)?;
            let out = tensor::add(input, &inner_out)?;
            Ok((out, Trace::Residual(trace)))
        }
        (LayerSpec::InceptionBlock { branches }, LayerParams::Branches(branch_params)) => {
            let mut outputs = Vec::with_capacity(branches.len());
            let mut traces = Vec::with_capacity(branches.len());
            for (branch, params) in branches.iter().zip(branch_params.iter()) {
                let steps: Vec<(&LayerSpec, &LayerParams)> =
                    branch.iter().zip(params.iter()).collect();
                let (out, trace) = forward_chain(&steps, input)?;
                outputs.push(out);
                traces.push(trace);
            }
            let branch_channels: Vec<usize> = outputs.iter().map(|t| t.shape()[0]).collect();
            let refs: Vec<&Tensor> = outputs.iter().collect();
            let out = tensor::concat_channels(&refs)?;
            Ok((
                out,
                Trace::Inception {
                    branches: traces,
                    branch_channels,
                },
            ))
        }
        (
            LayerSpec::Fire {
                squeeze_channels,
                expand_channels,
            },
            LayerParams::Fire {
                squeeze,
                expand1x1,
                expand3x3,
            },
        ) => {
            let [sq_spec, e1_spec, e3_spec] = fire_sub_specs(*squeeze_channels, *expand_channels);
            let relu = LayerSpec::Relu;
            let pool = LayerSpec::MaxPool {
                window: 3,
                stride: stride_one(),
            };
            let stem_steps = [(&sq_spec, &**squeeze), (&relu, &NO_PARAMS)];
            let (stem_out, stem_trace) = forward_chain(&stem_steps, input)?;
            let e1_steps = [(&e1_spec, &**expand1x1), (&relu, &NO_PARAMS), (&pool, &NO_PARAMS)];
            let (e1_out, e1_trace) = forward_chain(&e1_steps, &stem_out)?;
            let e3_steps = [(&e3_spec, &**expand3x3), (&relu, &NO_PARAMS)];
            let (e3_out, e3_trace) = forward_chain(&e3_steps, &stem_out)?;
            let out = tensor::concat_channels(&[&e1_out, &e3_out])?;
            Ok((
                out,
                Trace::Fire {
                    stem: stem_trace,
                    stem_out,
                    expand1: e1_trace,
                    expand3: e3_trace,
                    expand_channels: *expand_channels,
                },
            ))
        }
        _ => Err(Error::ShapeMismatch(
            "layer parameters do not match layer spec".into(),
        )),
    }
}

pub(crate) fn forward_chain(
    steps: &[(&LayerSpec, &LayerParams)],
    input: &Tensor,
) -> Result<(Tensor, Vec<StepTrace>)> {
    let mut traces = Vec::with_capacity(steps.len());
    let mut current = input.clone();
    for (spec, params) in steps {
        let (out, trace) = forward_layer(spec, params, &current)?;
        traces.push(StepTrace {
            input: current,
            trace,
        });
        current = out;
    }
    Ok((current, traces))
}

/// Splits a rank-3 tensor into channel groups of the given sizes.
fn split_channels(t: &Tensor, sizes: &[usize]) -> Vec<Tensor> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let plane = h * w;
    let mut parts = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &c in sizes {
        let data = t.data()[offset * plane..(offset + c) * plane].to_vec();
        parts.push(Tensor::new(vec![c, h, w], data).expect("split sizes checked"));
        offset += c;
    }
    parts
}

pub(crate) fn backward_layer(
    spec: &LayerSpec,
    params: &LayerParams,
    input: &Tensor,
    trace: &Trace,
    upstream: &Tensor,
) -> Result<(LayerParams, Tensor)> {
    match (spec, params, trace) {
        (LayerSpec::Conv { stride, .. }, LayerParams::Conv { weight, bias: _ }, _) => {
            conv_backward(input, weight, *stride, upstream)
        }
        (LayerSpec::Relu, _, _) => {
            let data = input
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            Ok((LayerParams::None, Tensor::new(input.shape().to_vec(), data)?))
        }
        (LayerSpec::MaxPool { window, stride }, _, _) => {
            Ok((LayerParams::None, pool_backward(input, *window, *stride, upstream)))
        }
        (LayerSpec::Flatten, _, _) => {
            Ok((LayerParams::None, upstream.reshape(input.shape().to_vec())?))
        }
        (LayerSpec::Dense { .. }, LayerParams::Dense { weight, .. }, _) => {
            let (k, d) = (weight.shape()[0], weight.shape()[1]);
            let mut dw = vec![0.0; k * d];
            let mut dx = vec![0.0; d];
            for row in 0..k {
                let g = upstream.data()[row];
                for col in 0..d {
                    dw[row * d + col] = g * input.data()[col];
                    dx[col] += g * weight.data()[row * d + col];
                }
            }
            let grads = LayerParams::Dense {
                weight: Tensor::new(vec![k, d], dw)?,
                bias: upstream.clone(),
            };
            Ok((grads, Tensor::from_vec(dx)))
        }
        (LayerSpec::Residual { inner }, LayerParams::Seq(inner_params), Trace::Residual(steps)) => {
            let pairs: Vec<(&LayerSpec, &LayerParams)> =
                inner.iter().zip(inner_params.iter()).collect();
            let (grads, d_inner) = backward_chain(&pairs, steps, upstream)?;
            let dx = tensor::add(upstream, &d_inner)?;
            Ok((LayerParams::Seq(grads), dx))
        }
        (
            LayerSpec::InceptionBlock { branches },
            LayerParams::Branches(branch_params),
            Trace::Inception {
                branches: traces,
                branch_channels,
            },
        ) => {
            let upstream_parts = split_channels(upstream, branch_channels);
            let mut all_grads = Vec::with_capacity(branches.len());
            let mut dx: Option<Tensor> = None;
            for (((branch, params), trace), up) in branches
                .iter()
                .zip(branch_params.iter())
                .zip(traces.iter())
                .zip(upstream_parts.iter())
            {
                let pairs: Vec<(&LayerSpec, &LayerParams)> =
                    branch.iter().zip(params.iter()).collect();
                let (grads, d_branch) = backward_chain(&pairs, trace, up)?;
                all_grads.push(grads);
                dx = Some(match dx {
                    None => d_branch,
                    Some(acc) => tensor::add(&acc, &d_branch)?,
                });
            }
            Ok((LayerParams::Branches(all_grads), dx.expect("inception has branches")))
        }
        (
            LayerSpec::Fire {
                squeeze_channels,
                expand_channels,
            },
            LayerParams::Fire {
                squeeze,
                expand1x1,
                expand3x3,
            },
            Trace::Fire {
                stem,
                stem_out,
                expand1,
                expand3,
                expand_channels: ec,
            },
        ) => {
            let [sq_spec, e1_spec, e3_spec] = fire_sub_specs(*squeeze_channels, *expand_channels);
            let relu = LayerSpec::Relu;
            let pool = LayerSpec::MaxPool {
                window: 3,
                stride: stride_one(),
            };
            let parts = split_channels(upstream, &[*ec, *ec]);
            let e1_steps = [(&e1_spec, &**expand1x1), (&relu, &NO_PARAMS), (&pool, &NO_PARAMS)];
            let (mut e1_grads, d_stem_1) = backward_chain(&e1_steps, expand1, &parts[0])?;
            let e3_steps = [(&e3_spec, &**expand3x3), (&relu, &NO_PARAMS)];
            let (mut e3_grads, d_stem_3) = backward_chain(&e3_steps, expand3, &parts[1])?;
            let d_stem = tensor::add(&d_stem_1, &d_stem_3)?;
            debug_assert_eq!(d_stem.shape(), stem_out.shape());
            let stem_steps = [(&sq_spec, &**squeeze), (&relu, &NO_PARAMS)];
            let (mut stem_grads, dx) = backward_chain(&stem_steps, stem, &d_stem)?;
            let grads = LayerParams::Fire {
                squeeze: Box::new(stem_grads.swap_remove(0)),
                expand1x1: Box::new(e1_grads.swap_remove(0)),
                expand3x3: Box::new(e3_grads.swap_remove(0)),
            };
            Ok((grads, dx))
        }
        _ => Err(Error::ShapeMismatch(
            "layer parameters or trace do not match layer spec".into(),
        )),
    }
}

pub(crate) fn backward_chain(
    steps: &[(&LayerSpec, &LayerParams)],
    traces: &[StepTrace],
    upstream: &Tensor,
) -> Result<(Vec<LayerParams>, Tensor)> {
    let mut grads: Vec<Option<LayerParams>> = (0..steps.len()).map(|_| None).collect();
    let mut current = upstream.clone();
    for idx in (0..steps.len()).rev() {
        let (spec, params) = steps[idx];
        let st = &traces[idx];
        let (grad, dx) = backward_layer(spec, params, &st.input, &st.trace, &current)?;
        grads[idx] = Some(grad);
        current = dx;
    }
    Ok((grads.into_iter().map(|g| g.unwrap()).collect(), current))
}

fn conv_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: Stride,
    upstream: &Tensor,
) -> Result<(LayerParams, Tensor)> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, _, kh, kw) = (
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    );
    let (oh, ow) = (upstream.shape()[1], upstream.shape()[2]);
    let z = stride.get();

    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; c_out];
    let mut dx = vec![0.0; input.len()];
    for (o, db_slot) in db.iter_mut().enumerate() {
        for i in 0..oh {
            for j in 0..ow {
                let g = upstream.data()[(o * oh + i) * ow + j];
                *db_slot += g;
                for c in 0..c_in {
                    for a in 0..kh {
                        let in_row = (c * h + (z * i + a)) * w + z * j;
                        let k_row = ((o * c_in + c) * kh + a) * kw;
                        for b in 0..kw {
                            dw[k_row + b] += g * input.data()[in_row + b];
                            dx[in_row + b] += g * weight.data()[k_row + b];
                        }
                    }
                }
            }
        }
    }
    let grads = LayerParams::Conv {
        weight: Tensor::new(weight.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![c_out], db)?,
    };
    Ok((grads, Tensor::new(input.shape().to_vec(), dx)?))
}

/// Routes each pooled gradient to the first maximum in window scan order.
fn pool_backward(input: &Tensor, window: usize, stride: Stride, upstream: &Tensor) -> Tensor {
    let (c_n, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (upstream.shape()[1], upstream.shape()[2]);
    let z = stride.get();
    let mut dx = vec![0.0; input.len()];
    for c in 0..c_n {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for a in 0..window {
                    for b in 0..window {
                        let idx = (c * h + (z * i + a)) * w + (z * j + b);
                        let v = input.data()[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                dx[best_idx] += upstream.data()[(c * oh + i) * ow + j];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), dx).expect("same shape as input")
}

fn layer_pairs(net: &TrainedNetwork) -> Vec<(&LayerSpec, &LayerParams)> {
    net.spec.layers.iter().zip(net.params.iter()).collect()
}

fn check_input_shape(net: &TrainedNetwork, input: &Tensor) -> Result<()> {
    if input.shape() != net.spec.input_shape {
        return Err(Error::ShapeMismatch(format!(
            "network expects input {:?}, got {:?}",
            net.spec.input_shape,
            input.shape()
        )));
    }
    Ok(())
}

/// Runs the full network, returning the activation after every layer.
pub fn forward(net: &TrainedNetwork, input: &Tensor) -> Result<Vec<Tensor>> {
    check_input_shape(net, input)?;
    let pairs = layer_pairs(net);
    let (output, traces) = forward_chain(&pairs, input)?;
    let mut activations: Vec<Tensor> = traces.into_iter().skip(1).map(|s| s.input).collect();
    activations.push(output);
    Ok(activations)
}

/// The flattened activation at the spec's cut point. Layers past the cut
/// are not evaluated.
pub fn extract_features(net: &TrainedNetwork, input: &Tensor) -> Result<Tensor> {
    check_input_shape(net, input)?;
    let pairs = layer_pairs(net);
    let (output, _) = forward_chain(&pairs[..=net.spec.cut_index], input)?;
    Ok(output.flatten())
}

/// Smallest distance of the forward pass to an activation kink: the minimum
/// over `|v|` of every ReLU input and `winner - runner_up` of every pool
/// window. Finite-difference gradient probes are only trustworthy when this
/// margin comfortably exceeds the probe step.
pub fn kink_margin(net: &TrainedNetwork, input: &Tensor) -> Result<f64> {
    check_input_shape(net, input)?;
    let pairs = layer_pairs(net);
    let (_, margin) = margin_chain(&pairs, input)?;
    Ok(margin)
}

fn pool_runner_up_margin(input: &Tensor, window: usize, stride: Stride) -> f64 {
    if window < 2 {
        return f64::INFINITY;
    }
    let (c_n, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let z = stride.get();
    let (oh, ow) = (
        crate::tensor::valid_out_len(h, window, stride),
        crate::tensor::valid_out_len(w, window, stride),
    );
    let mut margin = f64::INFINITY;
    for c in 0..c_n {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for a in 0..window {
                    for b in 0..window {
                        let v = input.data()[(c * h + (z * i + a)) * w + (z * j + b)];
                        if v > best {
                            second = best;
                            best = v;
                        } else if v > second {
                            second = v;
                        }
                    }
                }
                // Exact ties are benign: they come from saturated zeros or
                // from one maximum reaching two slots through overlapping
                // stride-1 windows, so both entries move together. Distinct
                // sources landing on the same value has measure zero.
                if best != second {
                    margin = margin.min(best - second);
                }
            }
        }
    }
    margin
}

fn margin_chain(steps: &[(&LayerSpec, &LayerParams)], input: &Tensor) -> Result<(Tensor, f64)> {
    let mut margin = f64::INFINITY;
    let mut current = input.clone();
    for (spec, params) in steps {
        match spec {
            LayerSpec::Relu => {
                for &v in current.data() {
                    margin = margin.min(v.abs());
                }
            }
            LayerSpec::MaxPool { window, stride } => {
                margin = margin.min(pool_runner_up_margin(&current, *window, *stride));
            }
            LayerSpec::Residual { inner } => {
                if let LayerParams::Seq(inner_params) = params {
                    let inner_steps: Vec<(&LayerSpec, &LayerParams)> =
                        inner.iter().zip(inner_params.iter()).collect();
                    let (_, m) = margin_chain(&inner_steps, &current)?;
                    margin = margin.min(m);
                }
            }
            LayerSpec::InceptionBlock { branches } => {
                if let LayerParams::Branches(branch_params) = params {
                    for (branch, bp) in branches.iter().zip(branch_params.iter()) {
                        let branch_steps: Vec<(&LayerSpec, &LayerParams)> =
                            branch.iter().zip(bp.iter()).collect();
                        let (_, m) = margin_chain(&branch_steps, &current)?;
                        margin = margin.min(m);
                    }
                }
            }
            LayerSpec::Fire { .. } => {
                let (_, trace) = forward_layer(spec, params, &current)?;
                if let Trace::Fire {
                    stem,
                    expand1,
                    expand3,
                    ..
                } = &trace
                {
                    // each conv output (recorded as the following step's
                    // input) feeds a relu
                    for relu_input in [&stem[1].input, &expand1[1].input, &expand3[1].input] {
                        for &v in relu_input.data() {
                            margin = margin.min(v.abs());
                        }
                    }
                    // the 1x1 expand branch ends in a 3x3 stride-1 pool
                    margin = margin.min(pool_runner_up_margin(&expand1[2].input, 3, stride_one()));
                }
            }
            _ => {}
        }
        let (out, _) = forward_layer(spec, params, &current)?;
        current = out;
    }
    Ok((current, margin))
}

/// Reverse-mode gradients of the full forward composition with respect to
/// every parameter and the input. `upstream` must match the final
/// activation's shape. Frozen layers still receive gradients; filtering
/// happens in the optimizer step.
pub fn backward(
    net: &TrainedNetwork,
    input: &Tensor,
    upstream: &Tensor,
) -> Result<(Vec<LayerParams>, Tensor)> {
    check_input_shape(net, input)?;
    let pairs = layer_pairs(net);
    let (output, traces) = forward_chain(&pairs, input)?;
    if upstream.shape() != output.shape() {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient shape {:?} does not match output {:?}",
            upstream.shape(),
            output.shape()
        )));
    }
    backward_chain(&pairs, &traces, upstream)
}
