//! End-to-end protocol: pretrain on a source dataset, reload the weights as
//! initial values, fine-tune on half of the target set, extract one feature
//! matrix, train both heads on it, and report their test accuracies side by
//! side.

pub mod metrics;
mod report;

pub use metrics::{accuracy, confusion_matrix, precision_recall};
pub use report::{render_table, EvalReport, PerClassStats, ReportRow, SampleCounts};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, synthesize_dataset, LabeledDataset, SynthConfig};
use crate::error::{Error, Result};
use crate::heads::{
    svm_predict, softmax_predict, train_multiclass_svm, train_softmax, FeatureVector,
    HeadTrainConfig, SoftmaxHead, SvmHead,
};
use crate::net::{
    extract_features, init_weights, load_weights, preset, save_weights, sgd_train, EpochStats,
    TrainConfig, TrainedNetwork,
};
use crate::rng;
use crate::tensor::Tensor;

/// Flat-keyed configuration mirrored by the CLI's JSON config file.
/// Explicit CLI flags override these values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: String,
    pub image_size: usize,
    pub cut_index: Option<usize>,
    pub freeze_prefix: usize,

    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch_size: usize,
    pub pretrain_seed: u64,

    /// 0 skips fine-tuning entirely (the loaded extractor is used as-is).
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_batch_size: usize,
    pub finetune_seed: u64,

    pub softmax_lr: f64,
    pub softmax_epochs: usize,
    pub softmax_seed: u64,

    pub svm_c: f64,
    pub svm_tolerance: f64,
    pub svm_max_passes: Option<usize>,
    pub svm_seed: u64,

    pub split_seed: u64,

    /// Source / target dataset directories; `None` falls back to the
    /// built-in synthetic generator with the `*_synth_*` settings below.
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub weights: PathBuf,
    pub report_out: Option<PathBuf>,

    /// Also run the protocol from a random initialization and append its
    /// rows, so the transfer effect can be inspected.
    pub random_init: bool,

    pub source_synth_seed: u64,
    pub source_synth_noise: f64,
    pub source_synth_per_class: usize,
    pub target_synth_seed: u64,
    pub target_synth_noise: f64,
    pub target_synth_per_class: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preset: "alexnet-mini".into(),
            image_size: 64,
            cut_index: None,
            freeze_prefix: 0,
            pretrain_epochs: 10,
            pretrain_lr: 0.01,
            pretrain_batch_size: 16,
            pretrain_seed: 0,
            finetune_epochs: 50,
            finetune_lr: 0.01,
            finetune_batch_size: 16,
            finetune_seed: 0,
            softmax_lr: 0.1,
            softmax_epochs: 200,
            softmax_seed: 0,
            svm_c: 10.0,
            svm_tolerance: 1e-3,
            svm_max_passes: None,
            svm_seed: 0,
            split_seed: 0,
            source: None,
            target: None,
            weights: PathBuf::from("weights.rnfw"),
            report_out: None,
            random_init: false,
            source_synth_seed: 1001,
            source_synth_noise: 0.15,
            source_synth_per_class: 50,
            target_synth_seed: 7,
            target_synth_noise: 0.1,
            target_synth_per_class: 50,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config file; unknown keys are rejected.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn head_config(&self, seed: u64) -> HeadTrainConfig {
        HeadTrainConfig {
            learning_rate: self.softmax_lr,
            epochs: self.softmax_epochs,
            seed,
            c: self.svm_c,
            tolerance: self.svm_tolerance,
            max_passes: self.svm_max_passes,
        }
    }

    fn load_or_synth(
        &self,
        path: &Option<PathBuf>,
        synth_seed: u64,
        noise: f64,
        per_class: usize,
    ) -> Result<LabeledDataset> {
        match path {
            Some(dir) => load_dataset(dir, self.image_size, self.image_size),
            None => synthesize_dataset(&SynthConfig {
                class_count: 6,
                per_class,
                image_size: self.image_size,
                noise_level: noise,
                seed: synth_seed,
            }),
        }
    }

    pub fn source_dataset(&self) -> Result<LabeledDataset> {
        self.load_or_synth(
            &self.source,
            self.source_synth_seed,
            self.source_synth_noise,
            self.source_synth_per_class,
        )
    }

    pub fn target_dataset(&self) -> Result<LabeledDataset> {
        self.load_or_synth(
            &self.target,
            self.target_synth_seed,
            self.target_synth_noise,
            self.target_synth_per_class,
        )
    }
}

/// Outcome of a pretraining run.
pub struct PretrainSummary {
    pub network: TrainedNetwork,
    pub log: Vec<EpochStats>,
    pub weights_path: PathBuf,
}

/// Builds the preset, trains it on the source dataset, and writes the
/// weight file used as the transfer initialization.
pub fn run_pretrain(config: &PipelineConfig) -> Result<PretrainSummary> {
    let source = config.source_dataset()?;
    let class_count = source.class_count();
    let mut spec = preset(
        &config.preset,
        [3, config.image_size, config.image_size],
        class_count,
    )?;
    if let Some(cut) = config.cut_index {
        spec.cut_index = cut;
        crate::net::infer_shapes(&spec)?;
    }
    let initial = init_weights(&spec, config.pretrain_seed)?;
    let inputs: Vec<Tensor> = source.images().cloned().collect();
    let labels = source.labels();
    let train_config = TrainConfig {
        learning_rate: config.pretrain_lr,
        epochs: config.pretrain_epochs,
        batch_size: config.pretrain_batch_size,
        seed: config.pretrain_seed,
        freeze_prefix: 0,
    };
    let run = sgd_train(&initial, &inputs, &labels, class_count, &train_config)?;
    let mut network = run.network;
    network.provenance = format!(
        "pretrain:preset={},source={},epochs={},seed={}",
        config.preset,
        source.provenance(),
        config.pretrain_epochs,
        config.pretrain_seed
    );
    save_weights(&network, &config.weights)?;
    Ok(PretrainSummary {
        network,
        log: run.log,
        weights_path: config.weights.clone(),
    })
}

/// Feature matrix for a dataset through a trained extractor, in sample
/// order.
pub fn extract_feature_matrix(
    net: &TrainedNetwork,
    dataset: &LabeledDataset,
) -> Result<(Vec<FeatureVector>, Vec<usize>)> {
    let mut features = Vec::with_capacity(dataset.len());
    for (image, _) in dataset.samples() {
        features.push(FeatureVector::new(extract_features(net, image)?)?);
    }
    Ok((features, dataset.labels()))
}

/// CRC32 (hex) over the raw little-endian bytes of both feature matrices,
/// train first. Identical matrices give identical checksums, which is what
/// the fairness guarantee records.
pub fn features_checksum(train: &[FeatureVector], test: &[FeatureVector]) -> String {
    let mut hasher = crc32fast::Hasher::new();
    for f in train.iter().chain(test) {
        for v in f.values() {
            hasher.update(&v.to_le_bytes());
        }
    }
    format!("{:08x}", hasher.finalize())
}

struct HeadEvaluation {
    accuracy_pct: f64,
    confusion: Vec<Vec<usize>>,
    per_class: Vec<PerClassStats>,
}

fn evaluate_predictions(
    predictions: &[usize],
    labels: &[usize],
    class_names: &[String],
) -> Result<HeadEvaluation> {
    let k = class_names.len();
    let confusion = confusion_matrix(predictions, labels, k)?;
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let accuracy_pct = accuracy(correct, labels.len())?;
    let per_class = precision_recall(&confusion)
        .into_iter()
        .zip(class_names)
        .map(|((precision, recall), name)| PerClassStats {
            name: name.clone(),
            precision,
            recall,
        })
        .collect();
    Ok(HeadEvaluation {
        accuracy_pct,
        confusion,
        per_class,
    })
}

/// Heads trained for one extractor, with the shared feature checksum.
pub struct ComparisonRun {
    pub softmax_head: SoftmaxHead,
    pub svm_head: SvmHead,
    pub rows: Vec<ReportRow>,
    pub feature_checksum: String,
    pub finetune_log: Vec<EpochStats>,
}

fn run_one_extractor(
    config: &PipelineConfig,
    base: &TrainedNetwork,
    model_name: &str,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<ComparisonRun> {
    // Fine-tune the unfrozen suffix on the training half.
    let (extractor, finetune_log) = if config.finetune_epochs > 0 {
        let inputs: Vec<Tensor> = train.images().cloned().collect();
        let labels = train.labels();
        let train_config = TrainConfig {
            learning_rate: config.finetune_lr,
            epochs: config.finetune_epochs,
            batch_size: config.finetune_batch_size,
            seed: config.finetune_seed,
            freeze_prefix: config.freeze_prefix,
        };
        let run = sgd_train(base, &inputs, &labels, train.class_count(), &train_config)?;
        (run.network, run.log)
    } else {
        (base.clone(), Vec::new())
    };

    // One feature matrix per half, shared verbatim by both heads.
    let (train_features, train_labels) = extract_feature_matrix(&extractor, train)?;
    let (test_features, test_labels) = extract_feature_matrix(&extractor, test)?;
    let checksum = features_checksum(&train_features, &test_features);

    let softmax_head = train_softmax(
        &train_features,
        &train_labels,
        train.class_count(),
        &config.head_config(config.softmax_seed),
    )?;
    // The SVM sees bit-identical features; the checksum recomputation makes
    // that an enforced invariant rather than a comment.
    assert_eq!(checksum, features_checksum(&train_features, &test_features));
    let svm_head = train_multiclass_svm(
        &train_features,
        &train_labels,
        train.class_count(),
        &config.head_config(config.svm_seed),
    )?;

    let softmax_predictions: Vec<usize> = test_features
        .iter()
        .map(|f| softmax_predict(&softmax_head, f))
        .collect::<Result<_>>()?;
    let svm_predictions: Vec<usize> = test_features
        .iter()
        .map(|f| svm_predict(&svm_head, f))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(2);
    for (head_name, predictions) in [("softmax", &softmax_predictions), ("svm", &svm_predictions)]
    {
        let eval = evaluate_predictions(predictions, &test_labels, test.class_names())?;
        rows.push(ReportRow {
            model: model_name.to_string(),
            head: head_name.to_string(),
            accuracy_pct: eval.accuracy_pct,
            epochs: config.finetune_epochs,
            data_aug: false,
            confusion: eval.confusion,
            per_class: eval.per_class,
        });
    }

    Ok(ComparisonRun {
        softmax_head,
        svm_head,
        rows,
        feature_checksum: checksum,
        finetune_log,
    })
}

/// Full compare protocol against an in-memory target dataset, starting from
/// an already-loaded initialization. Returns the report and the fine-tune
/// logs (pretrained run first, then the optional random-init run).
pub fn finetune_and_compare_on(
    config: &PipelineConfig,
    pretrained: &TrainedNetwork,
    target: &LabeledDataset,
) -> Result<(EvalReport, Vec<Vec<EpochStats>>)> {
    let mut base = pretrained.clone();
    if let Some(cut) = config.cut_index {
        base.spec.cut_index = cut;
        crate::net::infer_shapes(&base.spec)?;
    }

    let split = crate::data::split_half(target, config.split_seed)?;
    let mut logs = Vec::new();

    let primary = run_one_extractor(config, &base, &config.preset, &split.train, &split.test)?;
    logs.push(primary.finetune_log.clone());
    let mut rows = primary.rows.clone();

    if config.random_init {
        let random_seed = rng::derive_seed(config.finetune_seed, 0x72616e64); // "rand"
        let random_base = init_weights(&base.spec, random_seed)?;
        let name = format!("{} (random init)", config.preset);
        let ablation = run_one_extractor(config, &random_base, &name, &split.train, &split.test)?;
        logs.push(ablation.finetune_log.clone());
        rows.extend(ablation.rows);
    }

    let report = EvalReport {
        rows,
        split_seed: config.split_seed,
        feature_checksum: primary.feature_checksum,
        counts: SampleCounts {
            train: split.train.len(),
            test: split.test.len(),
        },
    };
    report.validate()?;
    Ok((report, logs))
}

/// Path-driven compare: loads the weight file and the target dataset, runs
/// the protocol, optionally writes the JSON report. All-or-nothing: the
/// report file appears only after every stage succeeded.
pub fn run_finetune_and_compare(config: &PipelineConfig) -> Result<(EvalReport, Vec<Vec<EpochStats>>)> {
    let pretrained = load_weights(&config.weights)?;
    let target = config.target_dataset()?;
    let (report, logs) = finetune_and_compare_on(config, &pretrained, &target)?;
    if let Some(out) = &config.report_out {
        std::fs::write(out, report.to_json()?).map_err(|e| Error::io(out, e))?;
    }
    Ok((report, logs))
}
