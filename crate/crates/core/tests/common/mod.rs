//! Shared finite-difference gradient-check harness.
//!
//! The probe loss is a fixed random linear functional of the network output,
//! so away from activation kinks it is a polynomial in any single parameter
//! and central differences are accurate to O(h^2). Test instances are chosen
//! by seeded rejection so every ReLU input and pool-window margin sits well
//! clear of the 1e-5 probe step.

// each integration-test binary compiles this module and uses its own subset
#![allow(dead_code)]

use rand::Rng;

use recyclass::net::{backward, forward, init_weights, kink_margin, NetworkSpec, TrainedNetwork};
use recyclass::rng::{derive_seed, rng_from_seed};
use recyclass::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Minimum distance to any activation kink, 20x the probe step.
pub const KINK_MARGIN: f64 = 2e-4;

pub fn random_input(shape: [usize; 3], seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    let len = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..len).map(|_| rng.random::<f64>()).collect(),
    )
    .unwrap()
}

/// Seeded rejection: the first `(weights, input)` pair whose forward pass
/// keeps a safe distance from every ReLU/pool kink.
///
/// The zero-bias initialization is a degenerate point (a conv position whose
/// receptive field is entirely dead outputs exactly its bias, i.e. exactly
/// zero), so every parameter is first jittered to land the check at a
/// generic point in parameter space.
pub fn safe_instance(spec: &NetworkSpec, base_seed: u64) -> (TrainedNetwork, Tensor) {
    for attempt in 0..1000 {
        let seed = base_seed + attempt;
        let mut net = init_weights(spec, seed).unwrap();
        let mut jitter = rng_from_seed(derive_seed(seed, 0xbead));
        for layer in &mut net.params {
            layer.for_each_tensor_mut(&mut |t| {
                for v in t.data_mut() {
                    let magnitude = 0.01 + 0.05 * jitter.random::<f64>();
                    let sign = if jitter.random::<bool>() { 1.0 } else { -1.0 };
                    *v += sign * magnitude;
                }
            });
        }
        let input = random_input(spec.input_shape, derive_seed(seed, 0xf00d));
        let margin = kink_margin(&net, &input).unwrap();
        if margin >= KINK_MARGIN {
            return (net, input);
        }
    }
    panic!("no kink-safe instance found in 1000 attempts");
}

/// Fixed random projection of the final activation, the scalar probe loss.
pub fn projection(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

pub fn projection_loss(net: &TrainedNetwork, input: &Tensor, proj: &[f64]) -> f64 {
    let activations = forward(net, input).unwrap();
    let output = activations.last().unwrap();
    output
        .data()
        .iter()
        .zip(proj)
        .map(|(&v, &p)| v * p)
        .sum()
}

/// All parameter tensors of the analytic gradient, flattened in declaration
/// order.
pub fn backprop_param_grads(net: &TrainedNetwork, input: &Tensor, proj: &[f64]) -> Vec<Tensor> {
    let activations = forward(net, input).unwrap();
    let out_shape = activations.last().unwrap().shape().to_vec();
    let upstream = Tensor::new(out_shape, proj.to_vec()).unwrap();
    let (grads, _) = backward(net, input, &upstream).unwrap();
    let mut tensors = Vec::new();
    for layer in &grads {
        layer.for_each_tensor(&mut |t| tensors.push(t.clone()));
    }
    tensors
}

/// Gradient of the probe loss with respect to the input pixels.
pub fn backprop_input_grad(net: &TrainedNetwork, input: &Tensor, proj: &[f64]) -> Tensor {
    let activations = forward(net, input).unwrap();
    let out_shape = activations.last().unwrap().shape().to_vec();
    let upstream = Tensor::new(out_shape, proj.to_vec()).unwrap();
    let (_, input_grad) = backward(net, input, &upstream).unwrap();
    input_grad
}

pub fn perturb_param(
    net: &TrainedNetwork,
    tensor_idx: usize,
    elem: usize,
    delta: f64,
) -> TrainedNetwork {
    let mut out = net.clone();
    let mut cursor = 0usize;
    for layer in &mut out.params {
        layer.for_each_tensor_mut(&mut |t| {
            if cursor == tensor_idx {
                t.data_mut()[elem] += delta;
            }
            cursor += 1;
        });
    }
    out
}

pub fn fd_param_grad(
    net: &TrainedNetwork,
    input: &Tensor,
    proj: &[f64],
    tensor_idx: usize,
    elem: usize,
) -> f64 {
    let plus = projection_loss(&perturb_param(net, tensor_idx, elem, FD_STEP), input, proj);
    let minus = projection_loss(&perturb_param(net, tensor_idx, elem, -FD_STEP), input, proj);
    (plus - minus) / (2.0 * FD_STEP)
}

pub fn fd_input_grad(net: &TrainedNetwork, input: &Tensor, proj: &[f64], elem: usize) -> f64 {
    let mut plus = input.clone();
    plus.data_mut()[elem] += FD_STEP;
    let mut minus = input.clone();
    minus.data_mut()[elem] -= FD_STEP;
    (projection_loss(net, &plus, proj) - projection_loss(net, &minus, proj)) / (2.0 * FD_STEP)
}

/// Relative error with a floor: tiny gradients are held to an absolute
/// error of `FD_TOLERANCE * 1e-4`, which still sits an order of magnitude
/// above the f64 central-difference noise floor.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Tensor index range belonging to each top-level layer.
pub fn layer_tensor_ranges(net: &TrainedNetwork) -> Vec<std::ops::Range<usize>> {
    let mut ranges = Vec::with_capacity(net.params.len());
    let mut cursor = 0usize;
    for layer in &net.params {
        let start = cursor;
        layer.for_each_tensor(&mut |_| cursor += 1);
        ranges.push(start..cursor);
    }
    ranges
}

/// Checks `coords_per_layer` random parameter coordinates in every
/// parameterized top-level layer against central differences.
pub fn check_param_gradients(
    net: &TrainedNetwork,
    input: &Tensor,
    proj: &[f64],
    coords_per_layer: usize,
    seed: u64,
    context: &str,
) {
    let analytic = backprop_param_grads(net, input, proj);
    let tensors: Vec<Tensor> = {
        let mut out = Vec::new();
        for layer in &net.params {
            layer.for_each_tensor(&mut |t| out.push(t.clone()));
        }
        out
    };
    let mut rng = rng_from_seed(seed);
    for (layer_idx, range) in layer_tensor_ranges(net).into_iter().enumerate() {
        if range.is_empty() {
            continue;
        }
        let sizes: Vec<usize> = range.clone().map(|t| tensors[t].len()).collect();
        let total: usize = sizes.iter().sum();
        for _ in 0..coords_per_layer {
            let mut flat = rng.random_range(0..total);
            let mut tensor_idx = range.start;
            for size in &sizes {
                if flat < *size {
                    break;
                }
                flat -= size;
                tensor_idx += 1;
            }
            let fd = fd_param_grad(net, input, proj, tensor_idx, flat);
            let bp = analytic[tensor_idx].data()[flat];
            let err = rel_err(bp, fd);
            assert!(
                err <= FD_TOLERANCE,
                "{context}: layer {layer_idx} tensor {tensor_idx} elem {flat}: \
                 bp {bp:e} vs fd {fd:e} (rel err {err:e})"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// SVM solver audit helpers
// ---------------------------------------------------------------------------

use recyclass::heads::{BinarySvm, FeatureVector};

/// Random linearly separable 2D dataset with functional margin >= `gap`
/// under the hidden generator hyperplane. Both classes always present.
pub fn separable_2d(n: usize, seed: u64, gap: f64) -> (Vec<FeatureVector>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    loop {
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let w = [angle.cos(), angle.sin()];
        let b = rng.random::<f64>() - 0.5;
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        while features.len() < n {
            let x = [
                rng.random::<f64>() * 6.0 - 3.0,
                rng.random::<f64>() * 6.0 - 3.0,
            ];
            let f = w[0] * x[0] + w[1] * x[1] + b;
            if f.abs() >= gap {
                features.push(FeatureVector::from_values(x.to_vec()).unwrap());
                labels.push(if f > 0.0 { 1.0 } else { -1.0 });
            }
        }
        let pos = labels.iter().filter(|&&y| y > 0.0).count();
        if pos > 0 && pos < n {
            return (features, labels);
        }
    }
}

/// Asserts the three KKT conditions at tolerance `tol` and the representer
/// identity `w = sum_i alpha_i y_i x_i` at 1e-9.
pub fn assert_kkt(
    solution: &BinarySvm,
    features: &[FeatureVector],
    labels: &[f64],
    c: f64,
    tol: f64,
    context: &str,
) {
    let mut w_rebuilt = vec![0.0; solution.weight.len()];
    for i in 0..features.len() {
        let alpha = solution.alpha[i];
        let y = labels[i];
        for (wv, &xv) in w_rebuilt.iter_mut().zip(features[i].values()) {
            *wv += alpha * y * xv;
        }
        let f = solution.decision(features[i].values()).unwrap();
        let g = y * f - 1.0;
        if alpha <= 0.0 {
            assert!(g >= -tol, "{context}: alpha=0 sample {i} violates y*f >= 1 - tol (g={g:e})");
        } else if alpha >= c {
            assert!(g <= tol, "{context}: alpha=C sample {i} violates y*f <= 1 + tol (g={g:e})");
        } else {
            assert!(g.abs() <= tol, "{context}: free sample {i} violates |y*f - 1| <= tol (g={g:e})");
        }
    }
    for (rebuilt, &stored) in w_rebuilt.iter().zip(&solution.weight) {
        assert!(
            (rebuilt - stored).abs() <= 1e-9,
            "{context}: representer identity violated ({rebuilt} vs {stored})"
        );
    }
}

/// Asserts the dual objective never decreases beyond fp noise.
pub fn assert_objective_monotone(trace: &[f64], context: &str) {
    for window in trace.windows(2) {
        let slack = 1e-9 * window[0].abs().max(1.0);
        assert!(
            window[1] >= window[0] - slack,
            "{context}: dual objective fell from {} to {}",
            window[0],
            window[1]
        );
    }
}
