//! Argument definitions and dispatch for the `derain` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use derain_core::networks::{DjrhrSpec, LossWeights, NetworkKind, NetworkSpec, SrrSpec};
use derain_core::synth::{Split, SynthMode, SynthOptions};
use derain_core::tensor_engine::AdamConfig;
use serde_json::json;

use crate::commands::{run_eval, run_infer, run_synth};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::train::{run_train, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "derain", version, about = "Single-image rain and haze removal")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate LQ/HQ pairs and a manifest.
    Synth(SynthArgs),
    /// Train SRR-net or DJRHR-net on a synthesized dataset.
    Train(TrainArgs),
    /// Restore an image or a directory of images with a checkpoint.
    Infer(InferArgs),
    /// Score restored images against references (PSNR, SSIM).
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// rain or rain_haze
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub density: Option<f32>,
    #[arg(long)]
    pub intensity: Option<f32>,
    #[arg(long)]
    pub beta: Option<f32>,
    #[arg(long)]
    pub airlight: Option<f32>,
    /// Clean source images; procedural scenes when omitted.
    #[arg(long)]
    pub hq_dir: Option<PathBuf>,
    /// Grayscale depth maps for rain_haze.
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    /// train, val or test
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// srr or djrhr
    #[arg(long)]
    pub model: Option<String>,
    /// Dataset directory containing manifest.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub crops_per_image: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub lr_decay: Option<f32>,
    #[arg(long)]
    pub weight_decay: Option<f32>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// SRR depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// SRR hidden width.
    #[arg(long)]
    pub width: Option<usize>,
    /// DJRHR dense blocks.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// DJRHR growth rate.
    #[arg(long)]
    pub growth: Option<usize>,
    #[arg(long)]
    pub layers_per_block: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Image file or directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file, or directory for directory input.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub restored: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// JSON-lines report destination.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map(RunConfig::load).transpose().map(Option::unwrap_or_default)
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::Config(format!("unknown split {other:?}"))),
    }
}

pub fn synth_options(args: &SynthArgs) -> Result<SynthOptions> {
    let cfg = load_config(args.config.as_deref())?;
    let mode: SynthMode = cfg
        .resolve::<String>("mode", args.mode.clone())?
        .ok_or_else(|| CliError::Config("--mode is required".into()))?
        .parse()?;
    let count = cfg
        .resolve("count", args.count)?
        .ok_or_else(|| CliError::Config("--count is required".into()))?;
    let base = SynthOptions::new(mode, count, cfg.resolve_or("seed", args.seed, 0)?);
    Ok(SynthOptions {
        size: cfg.resolve_or("size", args.size, base.size)?,
        density: cfg.resolve("density", args.density)?,
        intensity: cfg.resolve("intensity", args.intensity)?,
        beta: cfg.resolve("beta", args.beta)?,
        airlight: cfg.resolve("airlight", args.airlight)?,
        hq_dir: cfg.resolve("hq_dir", args.hq_dir.clone())?,
        depth_dir: cfg.resolve("depth_dir", args.depth_dir.clone())?,
        split: cfg
            .resolve::<String>("split", args.split.clone())?
            .map(|s| parse_split(&s))
            .transpose()?
            .unwrap_or_default(),
        ..base
    })
}

pub fn train_options(args: &TrainArgs) -> Result<TrainOptions> {
    let cfg = load_config(args.config.as_deref())?;
    let kind: NetworkKind = cfg
        .resolve::<String>("model", args.model.clone())?
        .ok_or_else(|| CliError::Config("--model is required".into()))?
        .parse()?;
    let spec = match kind {
        NetworkKind::Srr => {
            let d = SrrSpec::default();
            NetworkSpec::Srr(SrrSpec {
                depth: cfg.resolve_or("depth", args.depth, d.depth)?,
                width: cfg.resolve_or("width", args.width, d.width)?,
            })
        }
        NetworkKind::Djrhr => {
            let d = DjrhrSpec::default();
            NetworkSpec::Djrhr(DjrhrSpec {
                blocks: cfg.resolve_or("blocks", args.blocks, d.blocks)?,
                growth: cfg.resolve_or("growth", args.growth, d.growth)?,
                layers_per_block: cfg.resolve_or("layers_per_block", args.layers_per_block, d.layers_per_block)?,
            })
        }
    };
    let base = TrainOptions::new(spec, &args.data, &args.out);
    let adam = base.adam;
    Ok(TrainOptions {
        epochs: cfg.resolve_or("epochs", args.epochs, base.epochs)?,
        batch_size: cfg.resolve_or("batch_size", args.batch_size, base.batch_size)?,
        patch: cfg.resolve_or("patch", args.patch, base.patch)?,
        crops_per_image: cfg.resolve_or("crops_per_image", args.crops_per_image, base.crops_per_image)?,
        adam: AdamConfig {
            lr: cfg.resolve_or("lr", args.lr, adam.lr)?,
            lr_decay: cfg.resolve_or("lr_decay", args.lr_decay, adam.lr_decay)?,
            weight_decay: cfg.resolve_or("weight_decay", args.weight_decay, adam.weight_decay)?,
            ..adam
        },
        weights: LossWeights {
            alpha: cfg.resolve_or("alpha", args.alpha, LossWeights::default().alpha)?,
        },
        seed: cfg.resolve_or("seed", args.seed, base.seed)?,
        ..base
    })
}

/// Runs one subcommand and returns a one-line JSON summary for stdout.
pub fn run(cli: Cli) -> Result<String> {
    let summary = match cli.command {
        Command::Synth(args) => {
            let rows = run_synth(&synth_options(&args)?, &args.out)?;
            json!({ "command": "synth", "pairs": rows.len(), "out": args.out })
        }
        Command::Train(args) => {
            let s = run_train(&train_options(&args)?)?;
            json!({
                "command": "train",
                "epochs": s.epochs.len(),
                "checkpoint": s.checkpoint,
                "log": s.log,
                "final_loss": s.epochs.last().map(|e| e.total),
            })
        }
        Command::Infer(args) => {
            let written = run_infer(&args.checkpoint, &args.input, &args.output)?;
            json!({ "command": "infer", "images": written.len(), "output": args.output })
        }
        Command::Eval(args) => {
            let report = run_eval(&args.restored, &args.reference, args.report.as_deref())?;
            json!({ "command": "eval", "aggregate": report.aggregate() })
        }
    };
    Ok(summary.to_string())
}
