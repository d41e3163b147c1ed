//! Command-line surface for the pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/training
//! failure. Every stochastic stage echoes its seed, and identical
//! invocations produce byte-identical files and stdout.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use recyclass::data::{encode_ppm, synthesize_dataset, SynthConfig};
use recyclass::error::{Error, Result};
use recyclass::heads::{
    softmax_predict, svm_predict, train_multiclass_svm, train_softmax, FeatureVector,
};
use recyclass::net::{
    extract_features, load_tensor_container, load_weights, save_tensor_container, TensorContainer,
};
use recyclass::pipeline::{
    render_table, run_finetune_and_compare, run_pretrain, EvalReport, PipelineConfig,
};
use recyclass::tensor::Tensor;

#[derive(Parser)]
#[command(
    name = "recyclass",
    about = "CNN transfer-learning pipeline with softmax and SVM classifier heads",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 6-class PPM tree
    SynthData(SynthDataArgs),
    /// Train a preset on the source dataset and write the weight file
    Pretrain(PretrainArgs),
    /// Fine-tune from a weight file, train both heads, and report
    Compare(CompareArgs),
    /// Extract feature vectors for a dataset into a tensor container
    Extract(ExtractArgs),
    /// Train a single head on an extracted feature container
    TrainHead(TrainHeadArgs),
    /// Render a JSON report as a text table
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthDataArgs {
    /// Output directory for the class tree
    #[arg(long)]
    out: PathBuf,
    /// Images per class
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    /// Square image size in pixels
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    /// Uniform pixel noise amplitude
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConfigFileArg {
    /// JSON config file with flat keys mirroring the pipeline config;
    /// explicit flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    config_file: ConfigFileArg,
    /// Architectural preset
    #[arg(long)]
    preset: Option<String>,
    /// Feature cut layer index (defaults to the last layer)
    #[arg(long)]
    cut_index: Option<usize>,
    /// Pretraining epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Pretraining learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Pretraining seed
    #[arg(long)]
    seed: Option<u64>,
    /// Source dataset directory (omit to use the built-in synthetic source)
    #[arg(long)]
    source: Option<PathBuf>,
    /// Weight file to write
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config_file: ConfigFileArg,
    /// Architectural preset (report row label)
    #[arg(long)]
    preset: Option<String>,
    /// Feature cut layer index override
    #[arg(long)]
    cut_index: Option<usize>,
    /// Leading layers to freeze during fine-tuning
    #[arg(long)]
    freeze_prefix: Option<usize>,
    /// Fine-tuning epochs (0 skips fine-tuning)
    #[arg(long)]
    epochs: Option<usize>,
    /// Fine-tuning learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// SVM soft-margin parameter C
    #[arg(long)]
    svm_c: Option<f64>,
    /// SVM KKT violation tolerance
    #[arg(long)]
    svm_tol: Option<f64>,
    /// Fine-tuning seed
    #[arg(long)]
    seed: Option<u64>,
    /// Stratified split seed
    #[arg(long)]
    split_seed: Option<u64>,
    /// Target dataset directory (omit to use the built-in synthetic target)
    #[arg(long)]
    target: Option<PathBuf>,
    /// Weight file to load
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Report JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run from a random initialization for comparison
    #[arg(long)]
    random_init: bool,
}

#[derive(Args)]
struct ExtractArgs {
    /// Weight file to load
    #[arg(long)]
    weights: PathBuf,
    /// Dataset directory to featurize
    #[arg(long)]
    target: PathBuf,
    /// Output tensor container path
    #[arg(long)]
    out: PathBuf,
    /// Feature cut layer index override
    #[arg(long)]
    cut_index: Option<usize>,
    /// Image size datasets are resized to
    #[arg(long, default_value_t = 64)]
    image_size: usize,
}

#[derive(Args)]
struct TrainHeadArgs {
    /// Feature container produced by `extract`
    #[arg(long)]
    features: PathBuf,
    /// Head kind: softmax or svm
    #[arg(long)]
    head: String,
    /// Softmax learning rate
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Softmax epochs
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// SVM soft-margin parameter C
    #[arg(long, default_value_t = 10.0)]
    svm_c: f64,
    /// SVM KKT violation tolerance
    #[arg(long, default_value_t = 1e-3)]
    svm_tol: f64,
    /// Trainer seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON file to render
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are successes, everything else is usage
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, err)) => {
            eprintln!("error in {stage}: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

type StageResult = std::result::Result<(), (&'static str, Error)>;

fn run(cli: Cli) -> StageResult {
    match cli.command {
        Command::SynthData(args) => synth_data(args).map_err(|e| ("synth-data", e)),
        Command::Pretrain(args) => pretrain(args).map_err(|e| ("pretrain", e)),
        Command::Compare(args) => compare(args).map_err(|e| ("compare", e)),
        Command::Extract(args) => extract(args).map_err(|e| ("extract", e)),
        Command::TrainHead(args) => train_head(args).map_err(|e| ("train-head", e)),
        Command::Report(args) => report(args).map_err(|e| ("report", e)),
    }
}

fn load_config(arg: &ConfigFileArg) -> Result<PipelineConfig> {
    match &arg.config {
        Some(path) => PipelineConfig::from_json_file(path),
        None => Ok(PipelineConfig::default()),
    }
}

fn synth_data(args: SynthDataArgs) -> Result<()> {
    let dataset = synthesize_dataset(&SynthConfig {
        class_count: 6,
        per_class: args.per_class,
        image_size: args.image_size,
        noise_level: args.noise,
        seed: args.seed,
    })?;
    println!("synth-data seed: {}", args.seed);
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut written = 0usize;
    let mut per_class_counter = vec![0usize; dataset.class_count()];
    for (image, label) in dataset.samples() {
        let class_dir = args.out.join(&dataset.class_names()[*label]);
        std::fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        let path = class_dir.join(format!("img_{:04}.ppm", per_class_counter[*label]));
        per_class_counter[*label] += 1;
        std::fs::write(&path, encode_ppm(image)?).map_err(|e| Error::io(&path, e))?;
        written += 1;
    }
    println!(
        "wrote {written} images across {} classes under {}",
        dataset.class_count(),
        args.out.display()
    );
    Ok(())
}

fn pretrain(args: PretrainArgs) -> Result<()> {
    let mut config = load_config(&args.config_file)?;
    if let Some(v) = args.preset {
        config.preset = v;
    }
    if args.cut_index.is_some() {
        config.cut_index = args.cut_index;
    }
    if let Some(v) = args.epochs {
        config.pretrain_epochs = v;
    }
    if let Some(v) = args.lr {
        config.pretrain_lr = v;
    }
    if let Some(v) = args.seed {
        config.pretrain_seed = v;
    }
    if args.source.is_some() {
        config.source = args.source;
    }
    if let Some(v) = args.weights {
        config.weights = v;
    }

    println!("pretrain seed: {}", config.pretrain_seed);
    let summary = run_pretrain(&config)?;
    for stats in &summary.log {
        println!(
            "epoch {:>4}: loss {:.6}, accuracy {:.4}",
            stats.epoch, stats.mean_loss, stats.accuracy
        );
    }
    println!("wrote weights to {}", summary.weights_path.display());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let mut config = load_config(&args.config_file)?;
    if let Some(v) = args.preset {
        config.preset = v;
    }
    if args.cut_index.is_some() {
        config.cut_index = args.cut_index;
    }
    if let Some(v) = args.freeze_prefix {
        config.freeze_prefix = v;
    }
    if let Some(v) = args.epochs {
        config.finetune_epochs = v;
    }
    if let Some(v) = args.lr {
        config.finetune_lr = v;
    }
    if let Some(v) = args.svm_c {
        config.svm_c = v;
    }
    if let Some(v) = args.svm_tol {
        config.svm_tolerance = v;
    }
    if let Some(v) = args.seed {
        config.finetune_seed = v;
    }
    if let Some(v) = args.split_seed {
        config.split_seed = v;
    }
    if args.target.is_some() {
        config.target = args.target;
    }
    if let Some(v) = args.weights {
        config.weights = v;
    }
    if args.out.is_some() {
        config.report_out = args.out;
    }
    if args.random_init {
        config.random_init = true;
    }

    println!("split seed: {}", config.split_seed);
    println!("finetune seed: {}", config.finetune_seed);
    println!("softmax seed: {}", config.softmax_seed);
    println!("svm seed: {}", config.svm_seed);
    let (eval, logs) = run_finetune_and_compare(&config)?;
    for (run_idx, log) in logs.iter().enumerate() {
        for stats in log {
            println!(
                "finetune[{run_idx}] epoch {:>4}: loss {:.6}, accuracy {:.4}",
                stats.epoch, stats.mean_loss, stats.accuracy
            );
        }
    }
    print!("{}", render_table(&eval));
    if let Some(out) = &config.report_out {
        println!("wrote report to {}", out.display());
    }
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<()> {
    let mut network = load_weights(&args.weights)?;
    if let Some(cut) = args.cut_index {
        network.spec.cut_index = cut;
        recyclass::net::infer_shapes(&network.spec)?;
    }
    let dataset = recyclass::data::load_dataset(&args.target, args.image_size, args.image_size)?;
    let mut rows = Vec::with_capacity(dataset.len());
    for (image, _) in dataset.samples() {
        rows.push(extract_features(&network, image)?);
    }
    let dim = rows[0].len();
    let mut flat = Vec::with_capacity(rows.len() * dim);
    for row in &rows {
        flat.extend_from_slice(row.data());
    }
    let features = Tensor::new(vec![rows.len(), dim], flat)?;
    let labels = Tensor::from_vec(dataset.labels().iter().map(|&l| l as f64).collect());
    let container = TensorContainer {
        provenance: format!(
            "extract:weights={},target={}",
            args.weights.display(),
            args.target.display()
        ),
        tensors: vec![("features".into(), features), ("labels".into(), labels)],
        extra: serde_json::json!({ "class_names": dataset.class_names() }),
    };
    save_tensor_container(&container, &args.out)?;
    println!(
        "wrote {} feature vectors of dim {dim} to {}",
        rows.len(),
        args.out.display()
    );
    Ok(())
}

fn train_head(args: TrainHeadArgs) -> Result<()> {
    let container = load_tensor_container(&args.features)?;
    let find = |name: &str| -> Result<&Tensor> {
        container
            .tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("container lacks tensor '{name}'")))
    };
    let features_tensor = find("features")?;
    let labels_tensor = find("labels")?;
    if features_tensor.rank() != 2 {
        return Err(Error::ShapeMismatch("features tensor must be n x d".into()));
    }
    let (n, d) = (features_tensor.shape()[0], features_tensor.shape()[1]);
    let features: Vec<FeatureVector> = (0..n)
        .map(|i| {
            FeatureVector::from_values(features_tensor.data()[i * d..(i + 1) * d].to_vec())
        })
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = labels_tensor.data().iter().map(|&v| v as usize).collect();
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;

    let head_config = recyclass::heads::HeadTrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        seed: args.seed,
        c: args.svm_c,
        tolerance: args.svm_tol,
        max_passes: None,
    };
    println!("train-head seed: {}", args.seed);
    let correct = match args.head.as_str() {
        "softmax" => {
            let head = train_softmax(&features, &labels, class_count, &head_config)?;
            features
                .iter()
                .zip(&labels)
                .filter(|(f, &y)| softmax_predict(&head, f).map(|p| p == y).unwrap_or(false))
                .count()
        }
        "svm" => {
            let head = train_multiclass_svm(&features, &labels, class_count, &head_config)?;
            features
                .iter()
                .zip(&labels)
                .filter(|(f, &y)| svm_predict(&head, f).map(|p| p == y).unwrap_or(false))
                .count()
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown head '{other}' (expected softmax or svm)"
            )))
        }
    };
    let pct = recyclass::pipeline::accuracy(correct, labels.len())?;
    println!("{} training accuracy: {pct:.2}% ({correct}/{})", args.head, labels.len());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.path).map_err(|e| Error::io(&args.path, e))?;
    let eval = EvalReport::from_json(&text)?;
    eval.validate()?;
    print!("{}", render_table(&eval));
    Ok(())
}
