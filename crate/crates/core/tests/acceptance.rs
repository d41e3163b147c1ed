//! Acceptance suite: every release criterion as one test, each printing a
//! pass line with its measurements. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::time::Instant;

use common::*;
use rand::Rng;

use recyclass::data::{split_half, LabeledDataset};
use recyclass::heads::{
    softmax_probs, svm_margin, train_binary_svm, train_binary_svm_traced, HeadTrainConfig,
};
use recyclass::net::{
    forward, init_weights, load_weights, preset, save_weights, sgd_train, TrainConfig,
    TrainedNetwork, PRESET_NAMES,
};
use recyclass::pipeline::{
    render_table, run_finetune_and_compare, run_pretrain, EvalReport, PipelineConfig, ReportRow,
    SampleCounts,
};
use recyclass::rng::rng_from_seed;
use recyclass::tensor::{conv_valid_1d, conv_valid_2d, Stride, Tensor};

fn conv1d_oracle(x: &[f64], u: &[f64], z: usize) -> Vec<f64> {
    let out_len = (x.len() - u.len()) / z + 1;
    (0..out_len)
        .map(|k| {
            let mut acc = 0.0;
            for (j, &uj) in u.iter().enumerate() {
                acc += uj * x[z * k + j];
            }
            acc
        })
        .collect()
}

/// Direct-summation 2D oracle with the same accumulation order as the
/// implementation contract: bias first, then channels, rows, columns.
#[allow(clippy::too_many_arguments)]
fn conv2d_oracle(
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    kernels: &[f64],
    (c_out, kh, kw): (usize, usize, usize),
    bias: &[f64],
    z: usize,
) -> Vec<f64> {
    let oh = (h - kh) / z + 1;
    let ow = (w - kw) / z + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for a in 0..kh {
                        for b in 0..kw {
                            acc += kernels[((o * c_in + c) * kh + a) * kw + b]
                                * input[(c * h + (z * i + a)) * w + (z * j + b)];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    out
}

#[test]
fn criterion_01_convolution_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = rng_from_seed(0xC0DE);
    for case in 0..1000 {
        let l = rng.random_range(1..=60usize);
        let k = rng.random_range(1..=l);
        let z = rng.random_range(1..=5usize);
        let x: Vec<f64> = (0..l).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
        let u: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
        let out = conv_valid_1d(
            &Tensor::from_vec(x.clone()),
            &Tensor::from_vec(u.clone()),
            Stride::new(z).unwrap(),
        )
        .unwrap();
        assert_eq!(out.len(), (l - k) / z + 1, "length law failed on case {case}");
        assert_eq!(out.data(), conv1d_oracle(&x, &u, z).as_slice(), "1D case {case}");
    }
    for case in 0..200 {
        let c_in = rng.random_range(1..=3usize);
        let h = rng.random_range(1..=12usize);
        let w = rng.random_range(1..=12usize);
        let kh = rng.random_range(1..=h);
        let kw = rng.random_range(1..=w);
        let c_out = rng.random_range(1..=3usize);
        let z = rng.random_range(1..=3usize);
        let input: Vec<f64> = (0..c_in * h * w).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let kernels: Vec<f64> =
            (0..c_out * c_in * kh * kw).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let bias: Vec<f64> = (0..c_out).map(|_| rng.random::<f64>() - 0.5).collect();
        let out = conv_valid_2d(
            &Tensor::new(vec![c_in, h, w], input.clone()).unwrap(),
            &Tensor::new(vec![c_out, c_in, kh, kw], kernels.clone()).unwrap(),
            &Tensor::from_vec(bias.clone()),
            Stride::new(z).unwrap(),
        )
        .unwrap();
        let expected = conv2d_oracle(&input, (c_in, h, w), &kernels, (c_out, kh, kw), &bias, z);
        assert_eq!(out.shape(), &[c_out, (h - kh) / z + 1, (w - kw) / z + 1]);
        assert_eq!(out.data(), expected.as_slice(), "2D case {case}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    println!("ACCEPTANCE 1 (convolution oracle equivalence, 1000 x 1D + 200 x 2D exact): PASS in {elapsed:?}");
}

#[test]
fn criterion_02_gradient_checks() {
    let start = Instant::now();
    // every layer type in isolation (the per-type specs mirror the unit
    // gradient tests) and every preset end to end
    use recyclass::net::{LayerSpec, NetworkSpec};
    let conv = |out_channels, k, z| LayerSpec::Conv {
        out_channels,
        kernel_h: k,
        kernel_w: k,
        stride: Stride::new(z).unwrap(),
    };
    let pool = |window, z| LayerSpec::MaxPool {
        window,
        stride: Stride::new(z).unwrap(),
    };
    let per_type: Vec<(&str, NetworkSpec)> = vec![
        (
            "conv",
            NetworkSpec {
                input_shape: [2, 5, 5],
                layers: vec![conv(3, 2, 2), LayerSpec::Flatten],
                cut_index: 1,
            },
        ),
        (
            "dense",
            NetworkSpec {
                input_shape: [2, 3, 3],
                layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out_dim: 4 }],
                cut_index: 1,
            },
        ),
        (
            "relu",
            NetworkSpec {
                input_shape: [1, 4, 4],
                layers: vec![conv(2, 2, 1), LayerSpec::Relu, LayerSpec::Flatten],
                cut_index: 2,
            },
        ),
        (
            "max_pool",
            NetworkSpec {
                input_shape: [1, 5, 5],
                layers: vec![conv(2, 2, 1), pool(2, 1), LayerSpec::Flatten],
                cut_index: 2,
            },
        ),
        (
            "residual",
            NetworkSpec {
                input_shape: [2, 3, 3],
                layers: vec![
                    LayerSpec::Residual {
                        inner: vec![conv(2, 1, 1), LayerSpec::Relu, conv(2, 1, 1)],
                    },
                    LayerSpec::Flatten,
                ],
                cut_index: 1,
            },
        ),
        (
            "inception",
            NetworkSpec {
                input_shape: [2, 6, 6],
                layers: vec![
                    LayerSpec::InceptionBlock {
                        branches: vec![
                            vec![conv(2, 1, 1), LayerSpec::Relu, pool(3, 1)],
                            vec![conv(3, 3, 1), LayerSpec::Relu],
                        ],
                    },
                    LayerSpec::Flatten,
                ],
                cut_index: 1,
            },
        ),
        (
            "fire",
            NetworkSpec {
                input_shape: [2, 6, 6],
                layers: vec![
                    LayerSpec::Fire {
                        squeeze_channels: 2,
                        expand_channels: 3,
                    },
                    LayerSpec::Flatten,
                ],
                cut_index: 1,
            },
        ),
    ];
    for (idx, (name, spec)) in per_type.iter().enumerate() {
        let (net, input) = safe_instance(spec, 9000 + 10 * idx as u64);
        let out_len = forward(&net, &input).unwrap().last().unwrap().len();
        let proj = projection(out_len, 9500 + idx as u64);
        check_param_gradients(&net, &input, &proj, 20, 9900 + idx as u64, name);
    }
    for (idx, name) in PRESET_NAMES.iter().enumerate() {
        let spec = preset(name, [3, 32, 32], 6).unwrap();
        let (net, input) = safe_instance(&spec, 11_000 + 100 * idx as u64);
        let out_len = forward(&net, &input).unwrap().last().unwrap().len();
        let proj = projection(out_len, 12_000 + idx as u64);
        check_param_gradients(&net, &input, &proj, 20, 13_000 + idx as u64, name);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!("ACCEPTANCE 2 (gradient checks, step 1e-5, rel err <= 1e-4, >= 20 coords/layer): PASS in {elapsed:?}");
}

#[test]
fn criterion_03_softmax_laws() {
    let mut rng = rng_from_seed(0x50F7);
    for case in 0..1000 {
        let k = rng.random_range(2..=8usize);
        // include magnitude-1e3 entries
        let logits: Vec<f64> = (0..k)
            .map(|_| {
                if rng.random::<f64>() < 0.2 {
                    if rng.random::<bool>() { 1000.0 } else { -1000.0 }
                } else {
                    rng.random::<f64>() * 2000.0 - 1000.0
                }
            })
            .collect();
        let p = softmax_probs(&Tensor::from_vec(logits.clone())).unwrap();
        assert!(p.is_finite(), "overflow on case {case}");
        let sum: f64 = p.data().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12, "normalization case {case}: sum {sum}");
        assert!(p.data().iter().all(|&v| v > 0.0), "positivity case {case}");

        let shift = rng.random::<f64>() * 1000.0 - 500.0;
        let shifted: Vec<f64> = logits.iter().map(|q| q + shift).collect();
        let ps = softmax_probs(&Tensor::from_vec(shifted)).unwrap();
        for (a, b) in p.data().iter().zip(ps.data()) {
            assert!((a - b).abs() <= 1e-12, "shift invariance case {case}");
        }

        let argmax = |vs: &[f64]| {
            let mut best = 0;
            for (i, &v) in vs.iter().enumerate().skip(1) {
                if v > vs[best] {
                    best = i;
                }
            }
            best
        };
        assert_eq!(argmax(&logits), argmax(p.data()), "argmax case {case}");
    }
    println!("ACCEPTANCE 3 (softmax laws on 1000 random logit vectors incl. |q| = 1e3): PASS");
}

#[test]
fn criterion_04_svm_analytic_instance() {
    let features = vec![
        recyclass::heads::FeatureVector::from_values(vec![1.0, 0.0]).unwrap(),
        recyclass::heads::FeatureVector::from_values(vec![-1.0, 0.0]).unwrap(),
    ];
    let labels = vec![1.0, -1.0];
    let config = HeadTrainConfig {
        c: 1e4,
        tolerance: 1e-6,
        max_passes: Some(10_000),
        ..HeadTrainConfig::default()
    };
    let s = train_binary_svm(&features, &labels, &config).unwrap();
    assert!((s.weight[0] - 1.0).abs() < 1e-3, "w0 = {}", s.weight[0]);
    assert!(s.weight[1].abs() < 1e-3, "w1 = {}", s.weight[1]);
    assert!(s.bias.abs() < 1e-3, "b = {}", s.bias);
    let margin = svm_margin(&s.weight, s.bias, &features, &labels).unwrap();
    assert!((margin - 2.0).abs() < 1e-3, "margin = {margin}");
    let w_norm = (s.weight[0].powi(2) + s.weight[1].powi(2)).sqrt();
    assert!((2.0 / w_norm - margin).abs() < 1e-3, "2/||w|| = {} vs margin {margin}", 2.0 / w_norm);
    println!(
        "ACCEPTANCE 4 (SVM analytic two-point instance, C = 1e4): PASS (w = ({:.6}, {:.6}), b = {:.6}, margin = {margin:.6})",
        s.weight[0], s.weight[1], s.bias
    );
}

#[test]
fn criterion_05_svm_kkt_suite() {
    let config = HeadTrainConfig {
        c: 10.0,
        tolerance: 1e-3,
        max_passes: Some(20_000),
        ..HeadTrainConfig::default()
    };
    for seed in 0..50u64 {
        let (features, labels) = separable_2d(40, 0xAB00 + seed, 0.15);
        let (solution, trace) = train_binary_svm_traced(&features, &labels, &config).unwrap();
        assert!(solution.converged, "dataset {seed} did not converge");
        assert_kkt(
            &solution,
            &features,
            &labels,
            config.c,
            config.tolerance,
            &format!("dataset {seed}"),
        );
        assert_objective_monotone(&trace, &format!("dataset {seed}"));
    }
    println!("ACCEPTANCE 5 (SVM KKT suite, 50 random separable datasets, n = 40, tol = 1e-3): PASS");
}

fn tensor_bits(net: &TrainedNetwork) -> Vec<u64> {
    net.tensors()
        .iter()
        .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn criterion_06_transfer_mechanics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transfer.rnfw");
    let spec = preset("alexnet-mini", [3, 32, 32], 6).unwrap();
    let net = init_weights(&spec, 99).unwrap();

    // bit-exact round trip
    save_weights(&net, &path).unwrap();
    let loaded = load_weights(&path).unwrap();
    assert_eq!(tensor_bits(&net), tensor_bits(&loaded));

    // training from loaded == training from memory, bit for bit
    let mut rng = rng_from_seed(123);
    let inputs: Vec<Tensor> = (0..6)
        .map(|_| {
            Tensor::new(
                vec![3, 32, 32],
                (0..3 * 32 * 32).map(|_| rng.random::<f64>()).collect(),
            )
            .unwrap()
        })
        .collect();
    let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
    let freeze_prefix = 3;
    let config = TrainConfig {
        learning_rate: 0.02,
        epochs: 3,
        batch_size: 2,
        seed: 5,
        freeze_prefix,
    };
    let from_memory = sgd_train(&net, &inputs, &labels, 3, &config).unwrap();
    let from_loaded = sgd_train(&loaded, &inputs, &labels, 3, &config).unwrap();
    assert_eq!(tensor_bits(&from_memory.network), tensor_bits(&from_loaded.network));

    // frozen prefix untouched bit-exact
    for idx in 0..freeze_prefix {
        let mut before = Vec::new();
        net.params[idx].for_each_tensor(&mut |t| before.push(t.clone()));
        let mut after = Vec::new();
        from_memory.network.params[idx].for_each_tensor(&mut |t| after.push(t.clone()));
        for (a, b) in before.iter().zip(&after) {
            assert!(a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
    println!("ACCEPTANCE 6 (transfer mechanics: round trip, loaded-vs-memory training, freezing, all bit-exact): PASS");
}

#[test]
fn criterion_07_end_to_end_pipeline() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    // acceptance protocol: 6-class synthetic target (300 samples, noise 0.1,
    // 64x64), pretrain 10 epochs on a differently-seeded synthetic source,
    // fine-tune alexnet-mini 50 epochs -- the library defaults
    let config = PipelineConfig {
        weights: dir.path().join("w.rnfw"),
        report_out: Some(dir.path().join("report.json")),
        ..PipelineConfig::default()
    };
    assert_eq!(config.preset, "alexnet-mini");
    assert_eq!(config.pretrain_epochs, 10);
    assert_eq!(config.finetune_epochs, 50);
    assert_eq!(config.target_synth_per_class * 6, 300);
    assert_eq!(config.target_synth_noise, 0.1);
    assert_eq!(config.image_size, 64);
    assert_ne!(config.source_synth_seed, config.target_synth_seed);

    run_pretrain(&config).unwrap();
    let (report, _) = run_finetune_and_compare(&config).unwrap();

    for row in &report.rows {
        assert!(
            row.accuracy_pct >= 90.0,
            "{} head reached only {:.2}%",
            row.head,
            row.accuracy_pct
        );
    }

    // report file passes schema validation and carries the fairness checksum
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let parsed = EvalReport::from_json(&text).unwrap();
    parsed.validate().unwrap();
    assert_eq!(parsed, report);
    assert_eq!(parsed.feature_checksum.len(), 8);
    assert!(parsed.feature_checksum.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(parsed.counts.train, 150);
    assert_eq!(parsed.counts.test, 150);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}, budget 5 min");
    println!(
        "ACCEPTANCE 7 (end-to-end pipeline, both heads >= 90%): PASS in {elapsed:?} (softmax {:.2}%, svm {:.2}%)",
        report.rows[0].accuracy_pct, report.rows[1].accuracy_pct
    );
}

#[test]
fn criterion_08_split_protocol() {
    // uneven classes exercise the ceil rule; 1x1 images keep it fast
    let class_sizes = [5usize, 4, 7, 6, 3, 8];
    let mut samples = Vec::new();
    let mut names = Vec::new();
    let mut id = 0.0;
    for (class, &size) in class_sizes.iter().enumerate() {
        names.push(format!("c{class}"));
        for _ in 0..size {
            samples.push((Tensor::filled(vec![1, 1, 1], id), class));
            id += 1.0;
        }
    }
    let ds = LabeledDataset::new(samples, names, "acceptance".into()).unwrap();
    let total = ds.len();
    for seed in 0..100u64 {
        let pair = split_half(&ds, seed).unwrap();
        assert_eq!(pair.train.len() + pair.test.len(), total, "seed {seed}: coverage");
        let train_ids: Vec<u64> = pair.train.images().map(|t| t.data()[0] as u64).collect();
        let test_ids: Vec<u64> = pair.test.images().map(|t| t.data()[0] as u64).collect();
        for tid in &train_ids {
            assert!(!test_ids.contains(tid), "seed {seed}: halves overlap");
        }
        let mut all: Vec<u64> = train_ids.iter().chain(&test_ids).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..total as u64).collect::<Vec<_>>(), "seed {seed}: union");
        let train_counts = pair.train.class_counts();
        let test_counts = pair.test.class_counts();
        for class in 0..class_sizes.len() {
            assert!(
                train_counts[class].abs_diff(test_counts[class]) <= 1,
                "seed {seed}: class {class} imbalance"
            );
        }
    }
    println!("ACCEPTANCE 8 (stratified half-split invariants over 100 seeds): PASS");
}

#[test]
fn criterion_09_table_formatting() {
    let row = |head: &str, pct: f64| ReportRow {
        model: "GoogleNet".into(),
        head: head.into(),
        accuracy_pct: pct,
        epochs: 200,
        data_aug: false,
        confusion: vec![],
        per_class: vec![],
    };
    let report = EvalReport {
        rows: vec![row("softmax", 88.10), row("svm", 97.86)],
        split_seed: 0,
        feature_checksum: "00000000".into(),
        counts: SampleCounts { train: 0, test: 0 },
    };
    let table = render_table(&report);
    let line = table
        .lines()
        .find(|l| l.starts_with("GoogleNet"))
        .expect("GoogleNet row missing");
    let tokens: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(tokens[0], "GoogleNet");
    assert_eq!(tokens[1], "88.10");
    assert_eq!(tokens[2], "97.86");
    assert_eq!(tokens[3], "-");
    assert_eq!(tokens[4], "200");
    println!("ACCEPTANCE 9 (comparison table row renders two-decimal values verbatim): PASS ({line})");
}

#[test]
fn criterion_10_compare_determinism() {
    let exe = env!("CARGO_BIN_EXE_recyclass");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    let weights = dir.path().join("w.rnfw");
    let config = PipelineConfig {
        image_size: 32,
        pretrain_epochs: 2,
        finetune_epochs: 2,
        softmax_epochs: 50,
        source_synth_per_class: 4,
        target_synth_per_class: 4,
        weights: weights.clone(),
        ..PipelineConfig::default()
    };
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let run = |argv: &[&str]| -> std::process::Output {
        std::process::Command::new(exe)
            .args(argv)
            .current_dir(dir.path())
            .output()
            .expect("spawn CLI")
    };
    let pre = run(&["pretrain", "--config", config_path.to_str().unwrap()]);
    assert!(pre.status.success(), "pretrain failed: {}", String::from_utf8_lossy(&pre.stderr));

    let compare_args = [
        "compare",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        "report.json",
    ];
    let first = run(&compare_args);
    assert!(first.status.success(), "compare failed: {}", String::from_utf8_lossy(&first.stderr));
    let report_a = std::fs::read(dir.path().join("report.json")).unwrap();
    let second = run(&compare_args);
    assert!(second.status.success());
    let report_b = std::fs::read(dir.path().join("report.json")).unwrap();

    assert_eq!(report_a, report_b, "report files differ between identical invocations");
    assert_eq!(first.stdout, second.stdout, "stdout differs between identical invocations");
    println!("ACCEPTANCE 10 (identical compare invocations are byte-identical): PASS");
}
