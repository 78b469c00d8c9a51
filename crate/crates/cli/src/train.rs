use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use derain_core::networks::{LossWeights, Network, NetworkKind, NetworkSpec};
use derain_core::synth::{load_pair, read_manifest, SynthMode};
use derain_core::tensor_engine::{save_checkpoint, AdamConfig, AdamState};
use derain_core::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub spec: NetworkSpec,
    pub epochs: usize,
    pub batch_size: usize,
    /// Side of the square training crops; must be even.
    pub patch: usize,
    /// Crops drawn from every image per epoch.
    pub crops_per_image: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
}

impl TrainOptions {
    pub fn new(spec: NetworkSpec, data_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        TrainOptions {
            data_dir: data_dir.into(),
            out_dir: out_dir.into(),
            spec,
            epochs: 30,
            batch_size: 10,
            patch: 64,
            crops_per_image: 1,
            adam: AdamConfig {
                weight_decay: default_weight_decay(spec.kind()),
                ..AdamConfig::default()
            },
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepLog {
    pub kind: &'static str,
    pub epoch: usize,
    pub step: usize,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub lr: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub kind: &'static str,
    pub epoch: usize,
    pub steps: usize,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub lr: f32,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub epochs: Vec<EpochLog>,
}

/// Decoupled weight decay standing in for the L2 penalty on the weights.
pub fn default_weight_decay(kind: NetworkKind) -> f32 {
    match kind {
        NetworkKind::Srr => 1e-6,
        NetworkKind::Djrhr => 1e-4,
    }
}

pub fn expected_mode(kind: NetworkKind) -> SynthMode {
    match kind {
        NetworkKind::Srr => SynthMode::Rain,
        NetworkKind::Djrhr => SynthMode::RainHaze,
    }
}

fn validate(opts: &TrainOptions) -> Result<()> {
    let bad = |m: String| Err(CliError::Config(m));
    if opts.batch_size == 0 {
        return bad("batch_size must be positive".into());
    }
    if opts.patch < 2 || !opts.patch.is_multiple_of(2) {
        return bad(format!("patch {} must be even and at least 2", opts.patch));
    }
    if opts.crops_per_image == 0 {
        return bad("crops_per_image must be positive".into());
    }
    opts.spec.validate()?;
    opts.weights.validate()?;
    Ok(())
}

/// Loads every manifest pair after checking the dataset suits the model.
pub fn load_training_pairs(data_dir: &Path, kind: NetworkKind, patch: usize) -> Result<Vec<(Tensor, Tensor)>> {
    let rows = read_manifest(data_dir)?;
    let want = expected_mode(kind);
    if let Some(row) = rows.iter().find(|r| r.mode != want) {
        return Err(CliError::ModeMismatch {
            model: kind.as_str(),
            found: row.mode.as_str(),
            expected: want.as_str(),
        });
    }
    rows.iter()
        .map(|row| {
            let (lq, hq) = load_pair(data_dir, row)?;
            if lq.height() < patch || lq.width() < patch {
                return Err(CliError::Config(format!(
                    "{} is {}x{}, smaller than patch {patch}",
                    row.lq_path,
                    lq.height(),
                    lq.width()
                )));
            }
            Ok((lq, hq))
        })
        .collect()
}

fn crop(t: &Tensor, y0: usize, x0: usize, size: usize) -> Tensor {
    let mut out = Tensor::zeros([1, t.channels(), size, size]);
    for c in 0..t.channels() {
        for y in 0..size {
            let src = &t.plane(0, c)[(y0 + y) * t.width() + x0..][..size];
            out.plane_mut(0, c)[y * size..(y + 1) * size].copy_from_slice(src);
        }
    }
    out
}

/// Random crop origin aligned to even coordinates.
fn crop_origin(rng: &mut ChaCha8Rng, h: usize, w: usize, patch: usize) -> (usize, usize) {
    (
        2 * rng.random_range(0..=(h - patch) / 2),
        2 * rng.random_range(0..=(w - patch) / 2),
    )
}

fn write_line<T: Serialize>(log: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    let line = serde_json::to_string(value)?;
    writeln!(log, "{line}").map_err(|e| CliError::io(path, e))
}

fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:03}.ckpt"))
}

/// Trains from scratch, writing a checkpoint after every epoch and the final
/// model to `model.ckpt`. With zero epochs only the initial model is saved.
pub fn run_train(opts: &TrainOptions) -> Result<TrainSummary> {
    validate(opts)?;
    let kind = opts.spec.kind();
    let pairs = load_training_pairs(&opts.data_dir, kind, opts.patch)?;
    fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;

    let mut net: Network = Network::build(opts.spec, opts.seed)?;
    let mut adam = AdamState::new(opts.adam, net.params());
    let log_path = opts.out_dir.join(LOG_FILE);
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);

    let mut epochs = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..pairs.len())
            .flat_map(|i| std::iter::repeat_n(i, opts.crops_per_image))
            .collect();
        order.shuffle(&mut rng);

        let (mut sum_l1, mut sum_l2, mut sum_total, mut steps) = (0.0, 0.0, 0.0, 0usize);
        let lr = adam.lr();
        for chunk in order.chunks(opts.batch_size) {
            let mut xs = Vec::with_capacity(chunk.len());
            let mut ys = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (lq, hq) = &pairs[i];
                let (y0, x0) = crop_origin(&mut rng, lq.height(), lq.width(), opts.patch);
                xs.push(net.pack(&crop(lq, y0, x0, opts.patch))?);
                ys.push(net.pack(&crop(hq, y0, x0, opts.patch))?);
            }
            let x = Tensor::stack(&xs)?;
            let y = Tensor::stack(&ys)?;
            let loss = net.train_step(&mut adam, &x, &y, opts.weights)?;
            steps += 1;
            sum_l1 += loss.l1;
            sum_l2 += loss.l2;
            sum_total += loss.total;
            write_line(
                &mut log,
                &log_path,
                &StepLog {
                    kind: "step",
                    epoch,
                    step: adam.step as usize,
                    l1: loss.l1,
                    l2: loss.l2,
                    total: loss.total,
                    lr,
                },
            )?;
        }
        let stats = EpochLog {
            kind: "epoch",
            epoch,
            steps,
            l1: sum_l1 / steps as f64,
            l2: sum_l2 / steps as f64,
            total: sum_total / steps as f64,
            lr,
        };
        write_line(&mut log, &log_path, &stats)?;
        log.flush().map_err(|e| CliError::io(&log_path, e))?;
        epochs.push(stats);

        adam.decay_lr();
        let ckpt = net.to_checkpoint(Some(&adam), &[("epoch", epoch as i64)]);
        save_checkpoint(checkpoint_path(&opts.out_dir, epoch), &ckpt)?;
    }
    log.flush().map_err(|e| CliError::io(&log_path, e))?;

    let checkpoint = opts.out_dir.join(FINAL_CHECKPOINT);
    let ckpt = net.to_checkpoint(Some(&adam), &[("epoch", opts.epochs as i64)]);
    save_checkpoint(&checkpoint, &ckpt)?;
    Ok(TrainSummary {
        checkpoint,
        log: log_path,
        epochs,
    })
}
