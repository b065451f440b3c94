//! Command line front end: `prepare-data`, `train`, `colorize`, `evaluate`
//! and `ablate`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    build_manifest, filter_manifest, load_image, save_png, Dataset, DatasetManifest, FilterPolicy, FilterStats,
    LabelMode, Split,
};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::{evaluate_set, MetricReport};
use crate::networks::NetworkConfig;
use crate::trainer::{self, Colorizer, LossMode, TrainConfig};
use crate::util::write_atomic;

/// Environment variable selecting the compute device.
pub const DEVICE_VAR: &str = "COLORGAN_DEVICE";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CONFIG_COPY: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(
    name = "colorgan",
    version,
    about = "Colourize grayscale images with a conditional GAN"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a dataset root, drop colourless images and write the manifest.
    PrepareData(PrepareArgs),
    /// Train on the manifest in the output directory.
    Train(TrainArgs),
    /// Colourize a single image.
    Colorize(ColorizeArgs),
    /// Score a checkpoint on a manifest split.
    Evaluate(EvaluateArgs),
    /// Train and compare the L1, perceptual and combined loss settings.
    Ablate,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Dataset root (overrides `data.root`).
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// `single-class` or `multi-attribute` (overrides `data.label_mode`).
    #[arg(long)]
    pub label_mode: Option<LabelMode>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Continue from this checkpoint.
    #[arg(long, conflicts_with = "resume_latest")]
    pub resume: Option<PathBuf>,
    /// Continue from the checkpoint named by `latest` in the output directory.
    #[arg(long)]
    pub resume_latest: bool,
}

#[derive(Debug, Args)]
pub struct ColorizeArgs {
    /// Training checkpoint (`ckpt_<step>.bin`).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Grayscale or colour image; only its lightness is used.
    #[arg(long)]
    pub input: PathBuf,
    /// PNG output path.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Defaults to the latest checkpoint in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the manifest in the output directory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "held-out")]
    pub split: Split,
    /// Score each ground-truth image against itself.
    #[arg(long)]
    pub oracle: bool,
    /// Print `name=value` lines instead of a table.
    #[arg(long)]
    pub key_value: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub root: Option<PathBuf>,
    pub label_mode: LabelMode,
    /// Manifest location; defaults to `manifest.tsv` in the output directory.
    pub manifest: Option<PathBuf>,
    /// Part of the manifest used by `train`.
    pub train_split: Split,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: None,
            label_mode: LabelMode::SingleClass,
            manifest: None,
            train_split: Split::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    pub loss_mode: LossMode,
    pub seed: u64,
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weights: t.weights,
            loss_mode: t.loss_mode,
            seed: t.seed,
            checkpoint_every: t.checkpoint_every,
        }
    }
}

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub filter: FilterPolicy,
    pub train: TrainSection,
    pub network: NetworkConfig,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            data: DataSection::default(),
            filter: FilterPolicy::default(),
            train: TrainSection::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weights: t.weights,
            loss_mode: t.loss_mode,
            seed: t.seed,
            checkpoint_every: t.checkpoint_every,
            network: self.network.clone(),
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data
            .manifest
            .clone()
            .unwrap_or_else(|| self.out_dir.join(MANIFEST_FILE))
    }

    fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.train_config().validate()
    }
}

/// Fails unless the requested device is one this build can run on.
pub fn check_device(value: Option<&str>) -> Result<()> {
    match value {
        None | Some("") | Some("cpu") => Ok(()),
        Some(other) => Err(Error::config(format!(
            "{DEVICE_VAR}={other} is not available; this build runs on `cpu` only"
        ))),
    }
}

/// Resolves the run configuration from the file and global overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfigFile> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    check_device(std::env::var(DEVICE_VAR).ok().as_deref())?;
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::PrepareData(a) => cmd_prepare_data(&cfg, a, out).map(|_| ()),
        Command::Train(a) => cmd_train(&cfg, a, out),
        Command::Colorize(a) => cmd_colorize(a, out),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a, out).map(|_| ()),
        Command::Ablate => cmd_ablate(&cfg, out),
    }
}

pub fn cmd_prepare_data(cfg: &RunConfigFile, args: &PrepareArgs, out: &mut dyn Write) -> Result<FilterStats> {
    let root = args
        .root
        .clone()
        .or_else(|| cfg.data.root.clone())
        .ok_or_else(|| Error::config("no dataset root given (use --root or data.root)"))?;
    let mode = args.label_mode.unwrap_or(cfg.data.label_mode);
    let manifest = build_manifest(&root, mode)?;
    let (kept, stats) = filter_manifest(&manifest, &cfg.filter)?;
    let path = cfg.manifest_path();
    kept.save(&path)?;
    writeln!(out, "total {}", stats.total)?;
    writeln!(out, "rejected_grayscale {}", stats.rejected_grayscale)?;
    writeln!(out, "rejected_low_chroma {}", stats.rejected_low_chroma)?;
    writeln!(out, "surviving {}", stats.surviving)?;
    writeln!(out, "manifest {}", path.display())?;
    Ok(stats)
}

fn load_manifest(cfg: &RunConfigFile) -> Result<DatasetManifest> {
    let path = cfg.manifest_path();
    if path.is_file() {
        return DatasetManifest::load(&path);
    }
    match &cfg.data.root {
        Some(root) => build_manifest(root, cfg.data.label_mode),
        None => Err(Error::NotFound(path)),
    }
}

pub fn cmd_train(cfg: &RunConfigFile, args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = load_manifest(cfg)?.select(cfg.data.train_split);
    let train_cfg = cfg.train_config();
    let dataset = Dataset::prepare(&manifest, &cfg.filter, train_cfg.network.image_size)?;
    let steps = dataset.steps_per_epoch(train_cfg.batch_size);
    if steps == 0 {
        writeln!(
            out,
            "warning: {} images is fewer than one batch of {}; no steps will run",
            dataset.len(),
            train_cfg.batch_size
        )?;
    }
    fs::create_dir_all(&cfg.out_dir)?;
    write_atomic(&cfg.out_dir.join(CONFIG_COPY), cfg.to_toml().as_bytes())?;
    let resume_from = match (&args.resume, args.resume_latest) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => Some(trainer::latest_checkpoint(&cfg.out_dir)?),
        (None, false) => None,
    };
    let state = match resume_from {
        Some(ckpt) => trainer::resume(&dataset, &ckpt, &cfg.out_dir)?,
        None => trainer::train(&dataset, &train_cfg, &cfg.out_dir)?,
    };
    writeln!(out, "images {}", dataset.len())?;
    writeln!(out, "steps {}", state.global_step)?;
    writeln!(
        out,
        "checkpoint {}",
        trainer::latest_checkpoint(&cfg.out_dir)?.display()
    )?;
    Ok(())
}

pub fn cmd_colorize(args: &ColorizeArgs, out: &mut dyn Write) -> Result<()> {
    let image = load_image(&args.input)?;
    let mut colorizer = Colorizer::load(&args.checkpoint)?;
    let result = colorizer.colorize(&image)?;
    save_png(&result, &args.output)?;
    writeln!(
        out,
        "wrote {} ({}x{})",
        args.output.display(),
        result.width(),
        result.height()
    )?;
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfigFile, args: &EvaluateArgs, out: &mut dyn Write) -> Result<MetricReport> {
    let manifest = match &args.manifest {
        Some(p) => DatasetManifest::load(p)?,
        None => load_manifest(cfg)?,
    }
    .select(args.split);
    if manifest.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "split `{}` has no images",
            args.split.as_str()
        )));
    }
    let report = if args.oracle {
        let pairs = manifest
            .entries
            .iter()
            .map(|e| load_image(&manifest.image_path(e)).map(|img| (img.clone(), img)))
            .collect::<Result<Vec<_>>>()?;
        evaluate_set(&pairs)?
    } else {
        let ckpt = match &args.checkpoint {
            Some(p) => p.clone(),
            None => trainer::latest_checkpoint(&cfg.out_dir)?,
        };
        trainer::evaluate_manifest(&mut Colorizer::load(&ckpt)?, &manifest)?
    };
    if args.key_value {
        write!(out, "{}", report.key_values())?;
    } else {
        write!(out, "{}", report.table())?;
    }
    Ok(report)
}

pub fn cmd_ablate(cfg: &RunConfigFile, out: &mut dyn Write) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let dir = cfg.out_dir.join("ablation");
    fs::create_dir_all(&dir)?;
    write_atomic(&dir.join(CONFIG_COPY), cfg.to_toml().as_bytes())?;
    let result = trainer::run_ablation(&manifest, &cfg.filter, &cfg.train_config(), &dir)?;
    write!(out, "{}", result.table.render())?;
    for c in &result.checkpoints {
        writeln!(out, "checkpoint {}", c.display())?;
    }
    Ok(())
}
