//! Backpropagation vs central finite differences, per layer type and for
//! every preset end to end.

mod common;

use common::*;

use recyclass::net::{
    backward, forward, preset, LayerParams, LayerSpec, NetworkSpec, TrainedNetwork, PRESET_NAMES,
};
use recyclass::tensor::{Stride, Tensor};

fn conv(out_channels: usize, k: usize, z: usize) -> LayerSpec {
    LayerSpec::Conv {
        out_channels,
        kernel_h: k,
        kernel_w: k,
        stride: Stride::new(z).unwrap(),
    }
}

fn pool(window: usize, z: usize) -> LayerSpec {
    LayerSpec::MaxPool {
        window,
        stride: Stride::new(z).unwrap(),
    }
}

fn spec(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> NetworkSpec {
    let cut_index = layers.len() - 1;
    NetworkSpec {
        input_shape,
        layers,
        cut_index,
    }
}

fn check_layer_spec(name: &str, spec: &NetworkSpec, base_seed: u64) {
    let (net, input) = safe_instance(spec, base_seed);
    let out_len = forward(&net, &input).unwrap().last().unwrap().len();
    let proj = projection(out_len, base_seed ^ 0x9999);
    check_param_gradients(&net, &input, &proj, 20, base_seed ^ 0x5555, name);
}

#[test]
fn conv_layer_gradients() {
    check_layer_spec(
        "conv",
        &spec([2, 5, 5], vec![conv(3, 2, 2), LayerSpec::Flatten]),
        10,
    );
}

#[test]
fn dense_layer_gradients() {
    check_layer_spec(
        "dense",
        &spec([2, 3, 3], vec![LayerSpec::Flatten, LayerSpec::Dense { out_dim: 4 }]),
        20,
    );
}

#[test]
fn relu_layer_gradients() {
    check_layer_spec(
        "relu",
        &spec(
            [1, 4, 4],
            vec![conv(2, 2, 1), LayerSpec::Relu, LayerSpec::Flatten],
        ),
        30,
    );
}

#[test]
fn max_pool_layer_gradients() {
    check_layer_spec(
        "max_pool",
        &spec(
            [1, 5, 5],
            vec![conv(2, 2, 1), pool(2, 1), LayerSpec::Flatten],
        ),
        40,
    );
}

#[test]
fn residual_layer_gradients() {
    check_layer_spec(
        "residual",
        &spec(
            [2, 3, 3],
            vec![
                LayerSpec::Residual {
                    inner: vec![conv(2, 1, 1), LayerSpec::Relu, conv(2, 1, 1)],
                },
                LayerSpec::Flatten,
            ],
        ),
        50,
    );
}

#[test]
fn inception_layer_gradients() {
    check_layer_spec(
        "inception",
        &spec(
            [2, 6, 6],
            vec![
                LayerSpec::InceptionBlock {
                    branches: vec![
                        vec![conv(2, 1, 1), LayerSpec::Relu, pool(3, 1)],
                        vec![conv(3, 3, 1), LayerSpec::Relu],
                    ],
                },
                LayerSpec::Flatten,
            ],
        ),
        60,
    );
}

#[test]
fn fire_layer_gradients() {
    check_layer_spec(
        "fire",
        &spec(
            [2, 6, 6],
            vec![
                LayerSpec::Fire {
                    squeeze_channels: 2,
                    expand_channels: 3,
                },
                LayerSpec::Flatten,
            ],
        ),
        70,
    );
}

#[test]
fn input_gradients_through_relu_and_pool() {
    let spec = spec(
        [1, 5, 5],
        vec![conv(2, 2, 1), LayerSpec::Relu, pool(2, 1), LayerSpec::Flatten],
    );
    let (net, input) = safe_instance(&spec, 80);
    let out_len = forward(&net, &input).unwrap().last().unwrap().len();
    let proj = projection(out_len, 81);
    let analytic = backprop_input_grad(&net, &input, &proj);
    for elem in 0..input.len() {
        let fd = fd_input_grad(&net, &input, &proj, elem);
        let err = rel_err(analytic.data()[elem], fd);
        assert!(err <= FD_TOLERANCE, "input elem {elem}: rel err {err:e}");
    }
}

#[test]
fn every_preset_end_to_end_gradients() {
    for (idx, name) in PRESET_NAMES.iter().enumerate() {
        let spec = preset(name, [3, 32, 32], 6).unwrap();
        let (net, input) = safe_instance(&spec, 1000 + 100 * idx as u64);
        let out_len = forward(&net, &input).unwrap().last().unwrap().len();
        let proj = projection(out_len, 2000 + idx as u64);
        check_param_gradients(&net, &input, &proj, 20, 3000 + idx as u64, name);
    }
}

#[test]
fn dense_weight_gradient_is_outer_product() {
    // single dense layer, loss = one output value
    let net = TrainedNetwork {
        spec: NetworkSpec {
            input_shape: [1, 1, 3],
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out_dim: 2 }],
            cut_index: 1,
        },
        params: vec![
            LayerParams::None,
            LayerParams::Dense {
                weight: Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap(),
                bias: Tensor::zeros(vec![2]),
            },
        ],
        provenance: "test".into(),
    };
    let input = Tensor::new(vec![1, 1, 3], vec![2.0, 3.0, 5.0]).unwrap();
    let upstream = Tensor::from_vec(vec![1.0, 0.0]);
    let (grads, _) = backward(&net, &input, &upstream).unwrap();
    match &grads[1] {
        LayerParams::Dense { weight, bias } => {
            assert_eq!(weight.data(), &[2.0, 3.0, 5.0, 0.0, 0.0, 0.0]);
            assert_eq!(bias.data(), &[1.0, 0.0]);
        }
        other => panic!("expected dense grads, got {other:?}"),
    }
}

#[test]
fn dead_relu_blocks_gradient() {
    // zero weights and a negative bias hold the relu input at -1
    let net = TrainedNetwork {
        spec: NetworkSpec {
            input_shape: [1, 2, 2],
            layers: vec![conv(1, 1, 1), LayerSpec::Relu, LayerSpec::Flatten],
            cut_index: 2,
        },
        params: vec![
            LayerParams::Conv {
                weight: Tensor::zeros(vec![1, 1, 1, 1]),
                bias: Tensor::from_vec(vec![-1.0]),
            },
            LayerParams::None,
            LayerParams::None,
        ],
        provenance: "test".into(),
    };
    let input = Tensor::filled(vec![1, 2, 2], 0.5);
    let upstream = Tensor::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
    let (grads, input_grad) = backward(&net, &input, &upstream).unwrap();
    match &grads[0] {
        LayerParams::Conv { weight, bias } => {
            assert!(weight.data().iter().all(|&v| v == 0.0));
            assert!(bias.data().iter().all(|&v| v == 0.0));
        }
        other => panic!("expected conv grads, got {other:?}"),
    }
    assert!(input_grad.data().iter().all(|&v| v == 0.0));
}
