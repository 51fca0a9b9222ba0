use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gradkit::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use gradkit::data::{
    load_image, load_splits, synth_dataset, DatasetIndex, LoadedDataset, PreprocessMode, SynthSpec,
};
use gradkit::loss::LossName;
use gradkit::metrics::{top_k_accuracy, MetricsReport, TopK, DEFAULT_Z};
use gradkit::model::{instantiate, parse_model_spec, preset, ModelConfig, PRESET_NAMES};
use gradkit::nn::Network;
use gradkit::optim::{OptimizerConfig, OptimizerKind};
use gradkit::report::{history_rows, sweep_rows, write_report, write_sweep};
use gradkit::tensor::Tensor;
use gradkit::train::{score, train, History, TrainConfig};
use gradkit::{Error, Result};

#[derive(Parser)]
#[command(name = "gradkit", version, about = "Train and evaluate small CNN image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic class-per-directory image corpus
    Synth(SynthArgs),
    /// Train a model and write a checkpoint and History CSV
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split and print a metrics report
    Eval(EvalArgs),
    /// Print class probabilities for one image
    Predict(PredictArgs),
    /// Train every preset/optimizer/seed combination and write per-class results
    Sweep(SweepArgs),
    /// Merge History CSVs into a long-format table
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Training images per class
    #[arg(long)]
    per_class: usize,
    /// Validation images per class; 0 writes only train/
    #[arg(long, default_value_t = 0)]
    val_per_class: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset root: either train/ and val/ subtrees or one directory per class
    #[arg(long)]
    data: PathBuf,
    /// Validation share when the dataset has no val/ tree
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
}

#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long, value_enum, default_value_t = OptimizerKind::Adam)]
    optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Stop after this many epochs without a new best validation loss; 0 disables
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, value_enum, default_value_t = PreprocessMode::Rescale)]
    preprocess: PreprocessMode,
    #[arg(long, default_value = "cce")]
    loss: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl HyperArgs {
    fn optimizer_config(&self, kind: OptimizerKind, lr: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind,
            learning_rate: lr,
            rho: self.rho,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    fn train_config(&self, kind: OptimizerKind, lr: f64, seed: u64, resolution: usize) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer_config(kind, lr),
            loss: self.loss.parse()?,
            preprocess: self.preprocess,
            patience: self.patience,
            seed,
            resolution,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model description file (.gknet)
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    model: Option<PathBuf>,
    /// Built-in architecture: mini-inception, mini-resnet or mini-densenet
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Input resolution; defaults to 224 for presets and to the file's value for --model
    #[arg(long)]
    resolution: Option<usize>,
    /// Input channels for presets
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long)]
    out_checkpoint: PathBuf,
    #[arg(long)]
    out_history: PathBuf,
    /// Also write the History with its config as JSON
    #[arg(long)]
    out_history_json: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Train,
    Val,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the mode stored in the checkpoint
    #[arg(long, value_enum)]
    preprocess: Option<PreprocessMode>,
    /// Must match the model's input resolution when given
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Val)]
    split: SplitChoice,
    /// Split seed for datasets without a val/ tree
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_Z)]
    z: f64,
    /// Also report top-k accuracy
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "mini-inception,mini-resnet,mini-densenet")]
    presets: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sgd,rmsprop,adam")]
    optimizers: Vec<OptimizerKind>,
    #[arg(long, value_delimiter = ',', default_value = "42")]
    seeds: Vec<u64>,
    /// Per-optimizer learning rates such as `sgd=0.02,adam=0.0003`; others use --lr
    #[arg(long, value_delimiter = ',')]
    lr_for: Vec<String>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 224)]
    resolution: usize,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long)]
    out: PathBuf,
    /// Directory for each run's checkpoint and History CSV
    #[arg(long)]
    runs_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// History CSV files; the run name is the file stem
    #[arg(long = "history", required = true, num_args = 1..)]
    histories: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    if !path.is_file() {
        return Err(Error::Argument(format!("{what} {} not found", path.display())));
    }
    fs::read_to_string(path).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn image_geometry(config: &ModelConfig) -> Result<(usize, usize)> {
    match config.input {
        gradkit::model::Input::Image {
            channels,
            resolution,
        } => Ok((channels, resolution)),
        gradkit::model::Input::Vector(_) => Err(Error::Config("image datasets need an image-input model".into())),
    }
}

fn load_split(
    data: &DataArgs,
    seed: u64,
    channels: usize,
    resolution: usize,
    mode: PreprocessMode,
) -> Result<(LoadedDataset, LoadedDataset)> {
    let (train_idx, val_idx) = load_splits(&data.data, data.val_fraction, seed)?;
    if val_idx.is_empty() {
        return Err(Error::Ingest {
            message: "validation split is empty".into(),
            paths: vec![data.data.clone()],
        });
    }
    Ok((
        LoadedDataset::load(&train_idx, channels, resolution, mode)?,
        LoadedDataset::load(&val_idx, channels, resolution, mode)?,
    ))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let files = synth_dataset(
        &a.out,
        &SynthSpec {
            train_per_class: a.per_class,
            val_per_class: a.val_per_class,
            classes: a.classes,
            resolution: a.resolution,
            seed: a.seed,
        },
    )?;
    eprintln!("wrote {} images under {}", files.len(), a.out.display());
    Ok(())
}

fn final_report(net: &Network, val: &LoadedDataset, loss: LossName) -> Result<MetricsReport> {
    let s = score(net, val, loss)?;
    Ok(MetricsReport::from_confusion(&s.confusion, DEFAULT_Z))
}

fn run_training(
    config: &ModelConfig,
    train_data: &LoadedDataset,
    val_data: &LoadedDataset,
    cfg: &TrainConfig,
) -> Result<(Network, History)> {
    let mut net = instantiate(config, cfg.seed)?;
    eprintln!(
        "model {} with {} parameters, {} train / {} val samples",
        config.name,
        net.param_count(),
        train_data.len(),
        val_data.len()
    );
    let history = train(&mut net, train_data, val_data, cfg)?;
    for r in &history.records {
        eprintln!(
            "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
    }
    if history.stopped_early {
        eprintln!("early stop; restored weights from epoch {}", history.best_epoch);
    }
    Ok((net, history))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (train_idx, _) = load_splits(&a.data.data, a.data.val_fraction, a.hyper.seed)?;
    let classes = train_idx.classes.len();
    let config = match (&a.model, &a.preset) {
        (Some(path), _) => {
            let cfg = parse_model_spec(&read_text(path, "model file")?)?;
            match a.resolution {
                Some(r) => cfg.with_resolution(r)?,
                None => cfg,
            }
        }
        (None, Some(name)) => preset(name, a.channels, a.resolution.unwrap_or(224), classes)?,
        (None, None) => unreachable!("clap enforces --model or --preset"),
    };
    let (channels, resolution) = image_geometry(&config)?;
    let cfg = a
        .hyper
        .train_config(a.hyper.optimizer, a.hyper.lr, a.hyper.seed, resolution)?;
    let (train_data, val_data) = load_split(&a.data, a.hyper.seed, channels, resolution, cfg.preprocess)?;
    let (net, history) = run_training(&config, &train_data, &val_data, &cfg)?;

    let meta = CheckpointMeta {
        classes: train_data.classes.clone(),
        preprocess: cfg.preprocess,
    };
    save_checkpoint(&net, &meta, &a.out_checkpoint)?;
    write_file(&a.out_history, history.to_csv().as_bytes())?;
    if let Some(p) = &a.out_history_json {
        write_file(p, history.to_json().as_bytes())?;
    }
    emit(&final_report(&net, &val_data, cfg.loss)?.to_json());
    Ok(())
}

fn concat_indexes(a: DatasetIndex, b: DatasetIndex) -> DatasetIndex {
    let mut samples = a.samples;
    samples.extend(b.samples);
    samples.sort_by(|x, y| x.path.cmp(&y.path));
    DatasetIndex {
        classes: a.classes,
        samples,
        split: a.split,
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let (channels, resolution) = image_geometry(ckpt.network.config())?;
    if let Some(r) = a.resolution.filter(|&r| r != resolution) {
        return Err(Error::Argument(format!(
            "--resolution {r} does not match the model's input resolution {resolution}"
        )));
    }
    let mode = a.preprocess.unwrap_or(ckpt.meta.preprocess);
    let (train_idx, val_idx) = load_splits(&a.data.data, a.data.val_fraction, a.seed)?;
    if train_idx.classes != ckpt.meta.classes {
        return Err(Error::Config(format!(
            "dataset classes {:?} differ from checkpoint classes {:?}",
            train_idx.classes, ckpt.meta.classes
        )));
    }
    let index = match a.split {
        SplitChoice::Train => train_idx,
        SplitChoice::Val => val_idx,
        SplitChoice::All => concat_indexes(train_idx, val_idx),
    };
    let data = LoadedDataset::load(&index, channels, resolution, mode)?;
    let s = score(&ckpt.network, &data, LossName::CategoricalCrossEntropy)?;
    let mut report = MetricsReport::from_confusion(&s.confusion, a.z);
    if let Some(k) = a.top_k {
        let k_classes = ckpt.network.class_count();
        let flat: Vec<f64> = s.probabilities.concat();
        let probs = Tensor::new(&[s.predictions.len(), k_classes], flat)?;
        report.top_k = Some(TopK {
            k,
            accuracy: top_k_accuracy(&probs, data.labels(), k)?,
        });
    }
    eprintln!("loss {:.6} on {} samples", s.loss, data.len());
    emit(&report.to_json());
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let (channels, resolution) = image_geometry(ckpt.network.config())?;
    if !a.image.is_file() {
        return Err(Error::Argument(format!("image {} not found", a.image.display())));
    }
    let img = load_image(&a.image, channels, resolution, ckpt.meta.preprocess)?;
    let mut shape = vec![1];
    shape.extend_from_slice(img.shape());
    let probs = ckpt.network.predict(&img.reshape(&shape)?)?;
    let best = gradkit::train::argmax(probs.data());
    let json = serde_json::json!({
        "predicted": ckpt.meta.classes[best],
        "probabilities": ckpt
            .meta
            .classes
            .iter()
            .zip(probs.data())
            .map(|(name, p)| serde_json::json!({ "class": name, "probability": p }))
            .collect::<Vec<_>>(),
    });
    emit(&serde_json::to_string_pretty(&json).expect("json"));
    Ok(())
}

fn parse_lr_overrides(entries: &[String]) -> Result<Vec<(OptimizerKind, f64)>> {
    entries
        .iter()
        .map(|e| {
            let (k, v) = e
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("--lr-for expects optimizer=rate, got `{e}`")))?;
            let rate = v
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("bad learning rate `{v}`")))?;
            Ok((k.parse()?, rate))
        })
        .collect()
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    for p in &a.presets {
        if !PRESET_NAMES.contains(&p.as_str()) {
            return Err(Error::Config(format!("unknown preset `{p}`")));
        }
    }
    let overrides = parse_lr_overrides(&a.lr_for)?;
    let mut rows = Vec::new();
    for &seed in &a.seeds {
        let (train_idx, _) = load_splits(&a.data.data, a.data.val_fraction, seed)?;
        let classes = train_idx.classes.len();
        let (train_data, val_data) = load_split(&a.data, seed, a.channels, a.resolution, a.hyper.preprocess)?;
        for name in &a.presets {
            let config = preset(name, a.channels, a.resolution, classes)?;
            for &kind in &a.optimizers {
                let lr = overrides
                    .iter()
                    .rev()
                    .find(|(k, _)| *k == kind)
                    .map_or(a.hyper.lr, |(_, v)| *v);
                let cfg = a.hyper.train_config(kind, lr, seed, a.resolution)?;
                eprintln!("== {name} / {kind} (lr {lr}) / seed {seed}");
                let (net, history) = run_training(&config, &train_data, &val_data, &cfg)?;
                let report = final_report(&net, &val_data, cfg.loss)?;
                rows.extend(sweep_rows(name, kind.as_str(), seed, &report));
                if let Some(dir) = &a.runs_dir {
                    let stem = format!("{name}_{kind}_{seed}");
                    let meta = CheckpointMeta {
                        classes: train_data.classes.clone(),
                        preprocess: cfg.preprocess,
                    };
                    save_checkpoint(&net, &meta, &dir.join(format!("{stem}.gkpt")))?;
                    write_file(&dir.join(format!("{stem}.csv")), history.to_csv().as_bytes())?;
                }
            }
        }
    }
    let mut buf = Vec::new();
    write_sweep(&rows, &mut buf)?;
    write_file(&a.out, &buf)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.histories {
        let text = read_text(path, "history")?;
        let history = History::read_csv(text.as_bytes())?;
        let run = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("run")
            .to_string();
        rows.extend(history_rows(&run, &history));
    }
    let mut buf = Vec::new();
    write_report(&rows, &mut buf)?;
    write_file(&a.out, &buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 3 })
        }
    }
}
