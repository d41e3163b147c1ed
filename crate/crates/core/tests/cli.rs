//! CLI surface: exit codes, help, flag/config precedence, and the
//! extract / train-head / report round trips.

use std::path::Path;
use std::process::Output;

use recyclass::pipeline::PipelineConfig;

fn run_in(dir: &Path, argv: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_recyclass"))
        .args(argv)
        .current_dir(dir)
        .output()
        .expect("spawn CLI")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let text = format!("{}{}", stdout(&out), stderr(&out));
    assert!(text.contains("Usage"), "no usage text: {text}");
}

#[test]
fn unknown_flag_rejected_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["synth-data", "--out", "x", "--bogus-flag", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bogus-flag"));
}

#[test]
fn help_exists_for_every_subcommand_and_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["synth-data", "pretrain", "compare", "extract", "train-head", "report"] {
        let out = run_in(dir.path(), &[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help failed");
        assert!(stdout(&out).contains("--help"), "{sub} help text missing");
    }
    // defaulted flags show their defaults
    let out = run_in(dir.path(), &["synth-data", "--help"]);
    let text = stdout(&out);
    assert!(text.contains("default: 50"), "per-class default missing:\n{text}");
    assert!(text.contains("default: 64"), "image-size default missing:\n{text}");
}

#[test]
fn report_on_malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let out = run_in(dir.path(), &["report", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("report"));
}

#[test]
fn missing_weight_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["compare", "--weights", "absent.rnfw", "--epochs", "1"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_cli_flow_synth_pretrain_compare_extract_trainhead_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig {
        image_size: 32,
        pretrain_epochs: 2,
        finetune_epochs: 2,
        softmax_epochs: 50,
        source_synth_per_class: 4,
        target_synth_per_class: 4,
        weights: "w.rnfw".into(),
        ..PipelineConfig::default()
    };
    std::fs::write(
        dir.path().join("config.json"),
        serde_json::to_string_pretty(&config).unwrap(),
    )
    .unwrap();

    let synth = run_in(
        dir.path(),
        &[
            "synth-data",
            "--out",
            "data",
            "--per-class",
            "4",
            "--image-size",
            "32",
            "--seed",
            "5",
        ],
    );
    assert_eq!(synth.status.code(), Some(0), "{}", stderr(&synth));
    assert!(stdout(&synth).contains("seed: 5"), "seed not echoed");
    assert!(dir.path().join("data/glass").is_dir());

    let pretrain = run_in(
        dir.path(),
        &["pretrain", "--config", "config.json", "--source", "data"],
    );
    assert_eq!(pretrain.status.code(), Some(0), "{}", stderr(&pretrain));
    assert!(dir.path().join("w.rnfw").is_file());
    assert!(stdout(&pretrain).contains("epoch"), "no per-epoch log");

    let compare = run_in(
        dir.path(),
        &[
            "compare",
            "--config",
            "config.json",
            "--target",
            "data",
            "--split-seed",
            "3",
            "--out",
            "report.json",
        ],
    );
    assert_eq!(compare.status.code(), Some(0), "{}", stderr(&compare));
    let table = stdout(&compare);
    assert!(table.contains("Model"), "table header missing:\n{table}");
    assert!(table.contains("alexnet-mini"), "model row missing:\n{table}");
    assert!(table.contains("split seed: 3"), "split seed not echoed");

    let extract = run_in(
        dir.path(),
        &[
            "extract",
            "--weights",
            "w.rnfw",
            "--target",
            "data",
            "--out",
            "features.rnfw",
            "--image-size",
            "32",
        ],
    );
    assert_eq!(extract.status.code(), Some(0), "{}", stderr(&extract));
    assert!(dir.path().join("features.rnfw").is_file());

    for head in ["softmax", "svm"] {
        let train = run_in(
            dir.path(),
            &["train-head", "--features", "features.rnfw", "--head", head],
        );
        assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
        assert!(
            stdout(&train).contains("training accuracy"),
            "{head}: {}",
            stdout(&train)
        );
    }

    let report = run_in(dir.path(), &["report", "report.json"]);
    assert_eq!(report.status.code(), Some(0), "{}", stderr(&report));
    assert!(stdout(&report).contains("alexnet-mini"));

    // flags override config file values: an unknown preset must now fail
    let override_run = run_in(
        dir.path(),
        &[
            "pretrain",
            "--config",
            "config.json",
            "--preset",
            "not-a-preset",
        ],
    );
    assert_eq!(override_run.status.code(), Some(2));
    assert!(stderr(&override_run).contains("not-a-preset"));
}

#[test]
fn train_head_rejects_unknown_head_kind() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("f.rnfw"), b"junk").unwrap();
    let out = run_in(
        dir.path(),
        &["train-head", "--features", "f.rnfw", "--head", "tree"],
    );
    // the container is read first and is invalid -> data error
    assert_eq!(out.status.code(), Some(2));
}
