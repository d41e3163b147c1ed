//! Weight initialization and mini-batch SGD with layer freezing.

use crate::error::{Error, Result};
use crate::heads::softmax_probs_slice;
use crate::rng::{self, SeededRng};
use crate::tensor::Tensor;

use super::exec::{backward_chain, forward_chain};
use super::{layer_output_shape, LayerParams, LayerSpec, NetworkSpec, TrainConfig, TrainedNetwork};

const HEAD_SEED_TAG: u64 = 0x68656164; // "head"
const SHUFFLE_SEED_TAG: u64 = 0x73687566; // "shuf"

/// Scaled uniform draw: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
fn init_tensor(shape: Vec<usize>, fan_in: usize, rng: &mut SeededRng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng::uniform_symmetric(rng, bound)).collect();
    Tensor::new(shape, data).expect("init shapes are valid")
}

fn init_conv(out_channels: usize, in_channels: usize, kh: usize, kw: usize, rng: &mut SeededRng) -> LayerParams {
    let fan_in = in_channels * kh * kw;
    LayerParams::Conv {
        weight: init_tensor(vec![out_channels, in_channels, kh, kw], fan_in, rng),
        bias: Tensor::zeros(vec![out_channels]),
    }
}

fn init_layer(layer: usize, spec: &LayerSpec, input: &[usize], rng: &mut SeededRng) -> Result<(LayerParams, Vec<usize>)> {
    let params = match spec {
        LayerSpec::Conv {
            out_channels,
            kernel_h,
            kernel_w,
            ..
        } => init_conv(*out_channels, input[0], *kernel_h, *kernel_w, rng),
        LayerSpec::Dense { out_dim } => LayerParams::Dense {
            weight: init_tensor(vec![*out_dim, input[0]], input[0], rng),
            bias: Tensor::zeros(vec![*out_dim]),
        },
        LayerSpec::Residual { inner } => {
            let mut shape = input.to_vec();
            let mut items = Vec::with_capacity(inner.len());
            for step in inner {
                let (p, next) = init_layer(layer, step, &shape, rng)?;
                items.push(p);
                shape = next;
            }
            LayerParams::Seq(items)
        }
        LayerSpec::InceptionBlock { branches } => {
            let mut all = Vec::with_capacity(branches.len());
            for branch in branches {
                let mut shape = input.to_vec();
                let mut items = Vec::with_capacity(branch.len());
                for step in branch {
                    let (p, next) = init_layer(layer, step, &shape, rng)?;
                    items.push(p);
                    shape = next;
                }
                all.push(items);
            }
            LayerParams::Branches(all)
        }
        LayerSpec::Fire {
            squeeze_channels,
            expand_channels,
        } => LayerParams::Fire {
            squeeze: Box::new(init_conv(*squeeze_channels, input[0], 1, 1, rng)),
            expand1x1: Box::new(init_conv(*expand_channels, *squeeze_channels, 1, 1, rng)),
            expand3x3: Box::new(init_conv(*expand_channels, *squeeze_channels, 3, 3, rng)),
        },
        LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Flatten => LayerParams::None,
    };
    let out_shape = layer_output_shape(layer, spec, input)?;
    Ok((params, out_shape))
}

/// Fresh parameters for a spec: He-style scaled uniform weights, zero biases,
/// drawn in declaration order from a ChaCha stream seeded with `seed`.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<TrainedNetwork> {
    super::infer_shapes(spec)?;
    let mut rng = rng::rng_from_seed(seed);
    let mut params = Vec::with_capacity(spec.layers.len());
    let mut shape: Vec<usize> = spec.input_shape.to_vec();
    for (idx, layer) in spec.layers.iter().enumerate() {
        let (p, next) = init_layer(idx, layer, &shape, &mut rng)?;
        params.push(p);
        shape = next;
    }
    Ok(TrainedNetwork {
        spec: spec.clone(),
        params,
        provenance: format!("init:seed={seed}"),
    })
}

fn combine(acc: &mut LayerParams, other: &LayerParams, op: &impl Fn(&mut f64, f64)) {
    match (acc, other) {
        (LayerParams::None, LayerParams::None) => {}
        (
            LayerParams::Conv { weight: aw, bias: ab },
            LayerParams::Conv { weight: bw, bias: bb },
        )
        | (
            LayerParams::Dense { weight: aw, bias: ab },
            LayerParams::Dense { weight: bw, bias: bb },
        ) => {
            for (x, &y) in aw.data_mut().iter_mut().zip(bw.data()) {
                op(x, y);
            }
            for (x, &y) in ab.data_mut().iter_mut().zip(bb.data()) {
                op(x, y);
            }
        }
        (LayerParams::Seq(a), LayerParams::Seq(b)) => {
            for (x, y) in a.iter_mut().zip(b) {
                combine(x, y, op);
            }
        }
        (LayerParams::Branches(a), LayerParams::Branches(b)) => {
            for (xs, ys) in a.iter_mut().zip(b) {
                for (x, y) in xs.iter_mut().zip(ys) {
                    combine(x, y, op);
                }
            }
        }
        (
            LayerParams::Fire {
                squeeze: a1,
                expand1x1: a2,
                expand3x3: a3,
            },
            LayerParams::Fire {
                squeeze: b1,
                expand1x1: b2,
                expand3x3: b3,
            },
        ) => {
            combine(a1, b1, op);
            combine(a2, b2, op);
            combine(a3, b3, op);
        }
        _ => panic!("parameter structures do not match"),
    }
}

impl LayerParams {
    pub(crate) fn add_assign(&mut self, other: &LayerParams) {
        combine(self, other, &|x, y| *x += y);
    }

    pub(crate) fn scale_assign(&mut self, factor: f64) {
        self.for_each_tensor_mut(&mut |t| {
            for v in t.data_mut() {
                *v *= factor;
            }
        });
    }

    /// `self -= factor * other`
    pub(crate) fn sub_scaled_assign(&mut self, other: &LayerParams, factor: f64) {
        combine(self, other, &|x, y| *x -= factor * y);
    }

    pub(crate) fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(&mut |t| ok &= t.is_finite());
        ok
    }
}

/// Per-epoch training log entry (loss and accuracy measured on the
/// predictions made while the epoch ran).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Result of an SGD run: the updated network plus its per-epoch log.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub network: TrainedNetwork,
    pub log: Vec<EpochStats>,
}

/// Mini-batch SGD against softmax cross-entropy through a temporary dense
/// head of width `class_count` attached at the spec's cut point.
///
/// The temporary head is discarded; the returned network holds the updated
/// feature-extractor parameters. Layers with index below
/// `config.freeze_prefix` are returned bit-identical. The whole run is
/// deterministic given the seed: shuffle order, head initialization, and
/// batch accumulation order are all fixed.
pub fn sgd_train(
    net: &TrainedNetwork,
    inputs: &[Tensor],
    labels: &[usize],
    class_count: usize,
    config: &TrainConfig,
) -> Result<TrainRun> {
    if inputs.is_empty() {
        return Err(Error::Training {
            epoch: 0,
            batch: 0,
            reason: "empty dataset".into(),
        });
    }
    if inputs.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if class_count < 2 {
        return Err(Error::InvalidArgument("class_count must be >= 2".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {class_count} classes"
        )));
    }
    config.validate(net.spec.layers.len())?;
    net.validate()?;

    let cut = net.spec.cut_index;
    let feature_dim = super::feature_dim(&net.spec)?;

    let mut params: Vec<LayerParams> = net.params.clone();
    let mut head = {
        let mut rng = rng::rng_from_seed(rng::derive_seed(config.seed, HEAD_SEED_TAG));
        LayerParams::Dense {
            weight: init_tensor(vec![class_count, feature_dim], feature_dim, &mut rng),
            bias: Tensor::zeros(vec![class_count]),
        }
    };
    let mut shuffle_rng = rng::rng_from_seed(rng::derive_seed(config.seed, SHUFFLE_SEED_TAG));

    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        rng::shuffle(&mut shuffle_rng, &mut order);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let pairs: Vec<(&LayerSpec, &LayerParams)> = net.spec.layers[..=cut]
                .iter()
                .zip(params[..=cut].iter())
                .collect();
            let (head_w, head_b) = match &head {
                LayerParams::Dense { weight, bias } => (weight.clone(), bias.clone()),
                _ => unreachable!(),
            };

            let mut grad_acc: Vec<LayerParams> =
                params[..=cut].iter().map(zeros_like).collect();
            let mut head_acc = zeros_like(&head);
            let mut batch_loss = 0.0;

            for &sample in batch {
                let input = &inputs[sample];
                let label = labels[sample];
                if input.shape() != net.spec.input_shape {
                    return Err(Error::ShapeMismatch(format!(
                        "sample {sample} has shape {:?}, network expects {:?}",
                        input.shape(),
                        net.spec.input_shape
                    )));
                }
                let (cut_out, traces) = forward_chain(&pairs, input)?;
                let features = cut_out.flatten();

                // Temporary head: logits = W.f + b, loss = -ln softmax[label].
                let k = class_count;
                let mut logits = vec![0.0; k];
                for (row, slot) in logits.iter_mut().enumerate() {
                    let mut acc = head_b.data()[row];
                    for col in 0..feature_dim {
                        acc += head_w.data()[row * feature_dim + col] * features.data()[col];
                    }
                    *slot = acc;
                }
                let probs = softmax_probs_slice(&logits);
                batch_loss += -probs[label].ln();
                let predicted = argmax(&logits);
                if predicted == label {
                    correct += 1;
                }

                let mut dlogits = probs;
                dlogits[label] -= 1.0;

                // Head gradients and the gradient flowing into the features.
                let mut dw = vec![0.0; k * feature_dim];
                let mut dfeat = vec![0.0; feature_dim];
                for row in 0..k {
                    let g = dlogits[row];
                    for col in 0..feature_dim {
                        dw[row * feature_dim + col] = g * features.data()[col];
                        dfeat[col] += g * head_w.data()[row * feature_dim + col];
                    }
                }
                head_acc.add_assign(&LayerParams::Dense {
                    weight: Tensor::new(vec![k, feature_dim], dw)?,
                    bias: Tensor::from_vec(dlogits),
                });

                let upstream = Tensor::from_vec(dfeat).reshape(cut_out.shape().to_vec())?;
                let (sample_grads, _) = backward_chain(&pairs, &traces, &upstream)?;
                for (acc, g) in grad_acc.iter_mut().zip(&sample_grads) {
                    acc.add_assign(g);
                }
            }

            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    reason: "non-finite loss".into(),
                });
            }
            loss_sum += batch_loss;

            let inv = 1.0 / batch.len() as f64;
            if config.learning_rate != 0.0 {
                head_acc.scale_assign(inv);
                head.sub_scaled_assign(&head_acc, config.learning_rate);
                for (idx, grad) in grad_acc.iter_mut().enumerate() {
                    if idx < config.freeze_prefix {
                        continue;
                    }
                    grad.scale_assign(inv);
                    params[idx].sub_scaled_assign(grad, config.learning_rate);
                }
            }

            if !params.iter().all(|p| p.is_finite()) || !head.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    reason: "non-finite parameters after update".into(),
                });
            }
        }

        log.push(EpochStats {
            epoch,
            mean_loss: loss_sum / inputs.len() as f64,
            accuracy: correct as f64 / inputs.len() as f64,
        });
    }

    Ok(TrainRun {
        network: TrainedNetwork {
            spec: net.spec.clone(),
            params,
            provenance: format!(
                "{};sgd:epochs={},lr={},seed={},freeze={}",
                net.provenance, config.epochs, config.learning_rate, config.seed, config.freeze_prefix
            ),
        },
        log,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn zeros_like(params: &LayerParams) -> LayerParams {
    match params {
        LayerParams::None => LayerParams::None,
        LayerParams::Conv { weight, bias } => LayerParams::Conv {
            weight: Tensor::zeros(weight.shape().to_vec()),
            bias: Tensor::zeros(bias.shape().to_vec()),
        },
        LayerParams::Dense { weight, bias } => LayerParams::Dense {
            weight: Tensor::zeros(weight.shape().to_vec()),
            bias: Tensor::zeros(bias.shape().to_vec()),
        },
        LayerParams::Seq(items) => LayerParams::Seq(items.iter().map(zeros_like).collect()),
        LayerParams::Branches(branches) => LayerParams::Branches(
            branches
                .iter()
                .map(|b| b.iter().map(zeros_like).collect())
                .collect(),
        ),
        LayerParams::Fire {
            squeeze,
            expand1x1,
            expand3x3,
        } => LayerParams::Fire {
            squeeze: Box::new(zeros_like(squeeze)),
            expand1x1: Box::new(zeros_like(expand1x1)),
            expand3x3: Box::new(zeros_like(expand3x3)),
        },
    }
}
