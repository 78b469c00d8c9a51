//! End-to-end desk-scale experiment: synthesize a training set and a
//! disjoint held-out set, train, restore the held-out inputs and score both
//! the raw inputs and the restorations against the clean images.

use std::path::{Path, PathBuf};
use std::time::Instant;

use derain_core::metrics::Aggregate;
use derain_core::networks::{NetworkKind, NetworkSpec};
use derain_core::synth::{Split, SynthOptions};

use crate::commands::{run_eval, run_infer, run_synth};
use crate::error::Result;
use crate::train::{expected_mode, run_train, TrainOptions, TrainSummary};

#[derive(Clone, Debug)]
pub struct DeskOptions {
    pub spec: NetworkSpec,
    pub work_dir: PathBuf,
    pub train_count: usize,
    pub test_count: usize,
    pub size: usize,
    pub train_seed: u64,
    pub test_seed: u64,
    /// Adjusts training options built from `spec`; the data paths are filled in afterwards.
    pub train: TrainOptions,
}

impl DeskOptions {
    pub fn new(spec: NetworkSpec, work_dir: impl Into<PathBuf>) -> Self {
        DeskOptions {
            spec,
            work_dir: work_dir.into(),
            train_count: 64,
            test_count: 16,
            size: 128,
            train_seed: 1,
            test_seed: 1_000_001,
            train: TrainOptions::new(spec, "", ""),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DeskOutcome {
    pub kind: NetworkKind,
    /// Held-out LQ inputs scored against HQ.
    pub input: Aggregate,
    /// Restored held-out images scored against HQ.
    pub output: Aggregate,
    pub report: PathBuf,
    pub baseline_report: PathBuf,
    pub train: TrainSummary,
    pub seconds: f64,
}

impl DeskOutcome {
    pub fn psnr_gain(&self) -> f64 {
        self.output.mean_psnr_db - self.input.mean_psnr_db
    }

    pub fn ssim_gain(&self) -> f64 {
        self.output.mean_ssim - self.input.mean_ssim
    }
}

fn dataset(opts: &DeskOptions, dir: &Path, count: usize, seed: u64, split: Split) -> Result<()> {
    let synth = SynthOptions {
        size: opts.size,
        split,
        ..SynthOptions::new(expected_mode(opts.spec.kind()), count, seed)
    };
    run_synth(&synth, dir)?;
    Ok(())
}

pub fn run_desk(opts: &DeskOptions) -> Result<DeskOutcome> {
    let start = Instant::now();
    let w = &opts.work_dir;
    let (train_dir, test_dir) = (w.join("train"), w.join("test"));
    dataset(opts, &train_dir, opts.train_count, opts.train_seed, Split::Train)?;
    dataset(opts, &test_dir, opts.test_count, opts.test_seed, Split::Test)?;

    let train = TrainOptions {
        spec: opts.spec,
        data_dir: train_dir,
        out_dir: w.join("run"),
        ..opts.train.clone()
    };
    let summary = run_train(&train)?;

    let restored = w.join("restored");
    run_infer(&summary.checkpoint, &test_dir.join("lq"), &restored)?;
    let report = w.join("report.jsonl");
    let baseline_report = w.join("baseline.jsonl");
    let output = run_eval(&restored, &test_dir.join("hq"), Some(&report))?.aggregate();
    let input = run_eval(&test_dir.join("lq"), &test_dir.join("hq"), Some(&baseline_report))?.aggregate();

    Ok(DeskOutcome {
        kind: opts.spec.kind(),
        input,
        output,
        report,
        baseline_report,
        train: summary,
        seconds: start.elapsed().as_secs_f64(),
    })
}
