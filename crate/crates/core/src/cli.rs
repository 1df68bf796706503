//! Command-line front end.
//!
//! Every tunable can come from a `key=value` file passed with `--config`;
//! the key is the flag name with `-` replaced by `_`. Flags given on the
//! command line win over the file. Unknown keys are rejected. Paths are
//! flags only.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::data::{
    make_split, synth_dataset, PairedDataset, QueryPartition, SynthParams, ZeroShotSplit,
};
use crate::error::{Error, Result};
use crate::kv::{parse_list, KvFile};
use crate::model::LaehModel;
use crate::numerics::SeededRng;
use crate::objective::LossWeights;
use crate::retrieval::{evaluate, format_reports, random_code_baseline, Direction};
use crate::trainer::{train, TrainConfig};

/// Zero-shot cross-modal hashing: synthesize data, split, train, evaluate.
#[derive(Debug, Parser)]
#[command(name = "laeh", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic paired dataset (manifest plus matrix files).
    Synth(SynthArgs),
    /// Pick unseen classes and query instances for a dataset.
    Split(SplitArgs),
    /// Train a model on the seen-class training set.
    Train(TrainArgs),
    /// Score a checkpoint in both directions on all, unseen and seen queries.
    Eval(EvalArgs),
    /// Train and score one model per cell of an alpha/beta grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file with any of: classes, per_class, d1, d2, v, noise, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of classes [default: 12].
    #[arg(long)]
    pub classes: Option<usize>,
    /// Instances per class [default: 60].
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Image feature dimension [default: 64].
    #[arg(long)]
    pub d1: Option<usize>,
    /// Text feature dimension [default: 64].
    #[arg(long)]
    pub d2: Option<usize>,
    /// Semantic vector dimension [default: 300].
    #[arg(long)]
    pub v: Option<usize>,
    /// Feature noise standard deviation [default: 0.1].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Master seed; the "data" sub-seed is derived from it [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Split file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file with any of: unseen, query_per_class, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of unseen classes [default: 3].
    #[arg(long)]
    pub unseen: Option<usize>,
    /// Query instances drawn from each class [default: 10].
    #[arg(long)]
    pub query_per_class: Option<usize>,
    /// Master seed; the "split" sub-seed is derived from it [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// Code length in bits [default: 64].
    #[arg(long)]
    pub bits: Option<usize>,
    /// Common feature dimension [default: 128].
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Hidden layer widths, comma separated [default: 512,512].
    #[arg(long)]
    pub hidden: Option<String>,
    /// Learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Per-epoch learning-rate decay factor [default: 0.98].
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// Epochs [default: 30].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Instances per step, 0 for the full training set [default: 0].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Gradient steps per block per epoch [default: 1].
    #[arg(long)]
    pub inner_iters: Option<usize>,
    /// Gradient clipping norm, or "none" [default: 10].
    #[arg(long)]
    pub clip_norm: Option<String>,
    /// L2-normalize text features before the text net [default: false].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize_text: Option<bool>,
    /// Divide the code inner products by the code length in the attribute term [default: false].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub scale_attr: Option<bool>,
    /// Master seed; "init" and "batch" sub-seeds are derived from it [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

const TRAINING_KEYS: [&str; 12] = [
    "bits",
    "feature_dim",
    "hidden",
    "lr",
    "lr_decay",
    "epochs",
    "batch_size",
    "inner_iters",
    "clip_norm",
    "normalize_text",
    "scale_attr",
    "seed",
];

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Split file.
    #[arg(long)]
    pub split: PathBuf,
    /// Checkpoint directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV [default: <out>/train_log.csv].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// key=value file with alpha1, alpha2, beta and any training flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Image-side quantization weight [default: 1].
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Text-side quantization weight [default: 1].
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Attribute-similarity weight [default: 1].
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Split file.
    #[arg(long)]
    pub split: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Report file to write (CSV lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Score uniformly random codes of this many bits instead of a checkpoint.
    #[arg(long)]
    pub random_baseline: Option<usize>,
    /// Master seed for the random baseline [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Split file.
    #[arg(long)]
    pub split: PathBuf,
    /// Result table to write.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file with alpha1, alpha2, beta lists and any training flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// alpha1 values, comma separated [default: 1].
    #[arg(long)]
    pub alpha1: Option<String>,
    /// alpha2 values, comma separated [default: 1].
    #[arg(long)]
    pub alpha2: Option<String>,
    /// beta values, comma separated [default: 1].
    #[arg(long)]
    pub beta: Option<String>,
    /// Allow grids with more than 64 cells.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub training: TrainingFlags,
}

pub const MAX_SWEEP_CELLS: usize = 64;

/// Config file values under command-line flags.
struct Layers {
    file: KvFile,
}

impl Layers {
    fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        let file = match path {
            Some(p) => KvFile::read(p)?,
            None => KvFile::new(),
        };
        file.check_keys(allowed)?;
        Ok(Self { file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None if self.file.get(key).is_some() => self.file.parse_value(key),
            None => Ok(default),
        }
    }

    fn raw(&self, flag: Option<&str>, key: &str, default: &str) -> String {
        flag.or(self.file.get(key)).unwrap_or(default).to_string()
    }
}

fn parse_floats(key: &str, raw: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> =
        parse_list(raw).map_err(|_| Error::Invalid(format!("{key}: bad number list '{raw}'")))?;
    if values.is_empty() {
        return Err(Error::Invalid(format!("{key}: empty list")));
    }
    Ok(values)
}

fn training_config(flags: &TrainingFlags, layers: &Layers) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let hidden_raw = layers.raw(flags.hidden.as_deref(), "hidden", "512,512");
    let hidden = if hidden_raw.trim().is_empty() {
        Vec::new()
    } else {
        parse_list(&hidden_raw)
            .map_err(|_| Error::Invalid(format!("hidden: bad size list '{hidden_raw}'")))?
    };
    let clip_raw = layers.raw(flags.clip_norm.as_deref(), "clip_norm", "10");
    let clip_norm = match clip_raw.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|_| {
            Error::Invalid(format!("clip_norm: expected a number or none, got '{s}'"))
        })?),
    };
    let weights = LossWeights {
        scale_attr: layers.get(flags.scale_attr, "scale_attr", false)?,
        ..LossWeights::default()
    };
    let config = TrainConfig {
        weights,
        code_len: layers.get(flags.bits, "bits", d.code_len)?,
        feature_dim: layers.get(flags.feature_dim, "feature_dim", d.feature_dim)?,
        hidden,
        learning_rate: layers.get(flags.lr, "lr", d.learning_rate)?,
        lr_decay: layers.get(flags.lr_decay, "lr_decay", d.lr_decay)?,
        epochs: layers.get(flags.epochs, "epochs", d.epochs)?,
        batch_size: layers.get(flags.batch_size, "batch_size", d.batch_size)?,
        inner_iters: layers.get(flags.inner_iters, "inner_iters", d.inner_iters)?,
        seed: layers.get(flags.seed, "seed", d.seed)?,
        clip_norm,
        normalize_text: layers.get(flags.normalize_text, "normalize_text", d.normalize_text)?,
    };
    Ok(config)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_inputs(data: &Path, split: &Path) -> Result<(PairedDataset, ZeroShotSplit)> {
    let dataset = PairedDataset::load(data)?;
    let split = ZeroShotSplit::load(split)?;
    split.validate(&dataset)?;
    Ok((dataset, split))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let layers = Layers::load(
        args.config.as_deref(),
        &["classes", "per_class", "d1", "d2", "v", "noise", "seed"],
    )?;
    let d = SynthParams::default();
    let params = SynthParams {
        classes: layers.get(args.classes, "classes", d.classes)?,
        per_class: layers.get(args.per_class, "per_class", d.per_class)?,
        d1: layers.get(args.d1, "d1", d.d1)?,
        d2: layers.get(args.d2, "d2", d.d2)?,
        v: layers.get(args.v, "v", d.v)?,
        noise_sigma: layers.get(args.noise, "noise", d.noise_sigma)?,
    };
    let seed = layers.get(args.seed, "seed", 0)?;
    let dataset = synth_dataset(&params, &mut SeededRng::named(seed, "data"))?;
    let manifest = dataset.save(&args.out)?;
    log::info!(
        "wrote {} instances to {}",
        dataset.len(),
        manifest.display()
    );
    Ok(manifest)
}

pub fn cmd_split(args: &SplitArgs) -> Result<ZeroShotSplit> {
    let layers = Layers::load(
        args.config.as_deref(),
        &["unseen", "query_per_class", "seed"],
    )?;
    let dataset = PairedDataset::load(&args.data)?;
    let unseen = layers.get(args.unseen, "unseen", 3)?;
    let per_class = layers.get(args.query_per_class, "query_per_class", 10)?;
    let seed = layers.get(args.seed, "seed", 0)?;
    let split = make_split(
        &dataset,
        unseen,
        per_class,
        &mut SeededRng::named(seed, "split"),
    )?;
    split.save(&args.out)?;
    log::info!(
        "{} seen / {} unseen classes, {} train, {} retrieval, {} queries",
        split.seen_classes.len(),
        split.unseen_classes.len(),
        split.train_idx.len(),
        split.retrieval_idx.len(),
        split.query_idx.len()
    );
    Ok(split)
}

pub fn cmd_train(args: &TrainArgs) -> Result<LaehModel> {
    let mut allowed = vec!["alpha1", "alpha2", "beta"];
    allowed.extend(TRAINING_KEYS);
    let layers = Layers::load(args.config.as_deref(), &allowed)?;
    let mut config = training_config(&args.training, &layers)?;
    config.weights.alpha1 = layers.get(args.alpha1, "alpha1", 1.0)?;
    config.weights.alpha2 = layers.get(args.alpha2, "alpha2", 1.0)?;
    config.weights.beta = layers.get(args.beta, "beta", 1.0)?;
    let (dataset, split) = load_inputs(&args.data, &args.split)?;
    let (model, log) = train(&dataset, &split, &config)?;
    model.save(&args.out)?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.join("train_log.csv"));
    write_file(&log_path, &log.to_csv(&config))?;
    Ok(model)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let (dataset, split) = load_inputs(&args.data, &args.split)?;
    let reports = match (&args.model, args.random_baseline) {
        (Some(dir), None) => {
            let model = LaehModel::load(dir)?;
            evaluate(
                &model,
                &dataset,
                &split,
                &Direction::BOTH,
                &QueryPartition::ALL,
            )?
        }
        (None, Some(bits)) => {
            let mut rng = SeededRng::named(args.seed.unwrap_or(0), "eval");
            random_code_baseline(
                bits,
                &dataset,
                &split,
                &Direction::BOTH,
                &QueryPartition::ALL,
                &mut rng,
            )?
        }
        _ => {
            return Err(Error::Invalid(
                "pass exactly one of --model or --random-baseline".into(),
            ))
        }
    };
    let text = format_reports(&reports);
    write_file(&args.out, &text)?;
    Ok(text)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String> {
    let mut allowed = vec!["alpha1", "alpha2", "beta"];
    allowed.extend(TRAINING_KEYS);
    let layers = Layers::load(args.config.as_deref(), &allowed)?;
    let base = training_config(&args.training, &layers)?;
    let alpha1 = parse_floats("alpha1", &layers.raw(args.alpha1.as_deref(), "alpha1", "1"))?;
    let alpha2 = parse_floats("alpha2", &layers.raw(args.alpha2.as_deref(), "alpha2", "1"))?;
    let beta = parse_floats("beta", &layers.raw(args.beta.as_deref(), "beta", "1"))?;
    let cells = alpha1.len() * alpha2.len() * beta.len();
    if cells > MAX_SWEEP_CELLS && !args.force {
        return Err(Error::Invalid(format!(
            "grid has {cells} cells (limit {MAX_SWEEP_CELLS}); pass --force to run it"
        )));
    }
    let (dataset, split) = load_inputs(&args.data, &args.split)?;

    let mut out = String::from("# alpha1,alpha2,beta");
    for dir in Direction::BOTH {
        for part in QueryPartition::ALL {
            out.push_str(&format!(",{}_{}", dir.name(), part.name()));
        }
    }
    out.push('\n');
    for &a1 in &alpha1 {
        for &a2 in &alpha2 {
            for &b in &beta {
                let mut config = base.clone();
                config.weights = LossWeights {
                    alpha1: a1,
                    alpha2: a2,
                    beta: b,
                    scale_attr: base.weights.scale_attr,
                };
                log::info!("sweep cell alpha1={a1} alpha2={a2} beta={b}");
                let (model, _) = train(&dataset, &split, &config)?;
                let reports = evaluate(
                    &model,
                    &dataset,
                    &split,
                    &Direction::BOTH,
                    &QueryPartition::ALL,
                )?;
                out.push_str(&format!("{a1},{a2},{b}"));
                for dir in Direction::BOTH {
                    for part in QueryPartition::ALL {
                        let map = reports
                            .iter()
                            .find(|r| r.direction == dir && r.partition == part)
                            .map_or(f64::NAN, |r| r.map);
                        out.push_str(&format!(",{map:.6}"));
                    }
                }
                out.push('\n');
            }
        }
    }
    write_file(&args.out, &out)?;
    Ok(out)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| ()),
        Command::Split(a) => cmd_split(a).map(|_| ()),
        Command::Train(a) => cmd_train(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Invalid(e.to_string()))?;
    execute(&cli)
}
