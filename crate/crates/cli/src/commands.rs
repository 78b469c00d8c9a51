use std::fs;
use std::path::{Path, PathBuf};

use derain_core::imageio::{read_rgb, write_rgb};
use derain_core::metrics::{EvalReport, MetricConfig};
use derain_core::networks::Network;
use derain_core::synth::{make_dataset, ManifestEntry, SynthOptions};
use derain_core::tensor_engine::load_checkpoint;

use crate::error::{CliError, Result};

pub fn run_synth(opts: &SynthOptions, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    Ok(make_dataset(opts, out_dir)?)
}

fn is_image(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// A single image file, or the sorted images directly inside a directory.
pub fn list_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::NoImages(path.to_path_buf()));
    }
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Restores `input` (file or directory). A directory input writes
/// `<output>/<stem>.png` per image; a file input writes to `output` itself
/// unless `output` is an existing directory.
pub fn run_infer(checkpoint: &Path, input: &Path, output: &Path) -> Result<Vec<PathBuf>> {
    let net = Network::from_checkpoint(&load_checkpoint(checkpoint)?)?;
    let files = list_inputs(input)?;
    let to_dir = input.is_dir() || output.is_dir();
    if to_dir {
        fs::create_dir_all(output).map_err(|e| CliError::io(output, e))?;
    } else if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut written = Vec::with_capacity(files.len());
    for f in files {
        let restored = net.infer(&read_rgb(&f)?)?;
        let dest = if to_dir {
            output.join(format!("{}.png", stem(&f)))
        } else {
            output.to_path_buf()
        };
        write_rgb(&dest, &restored)?;
        written.push(dest);
    }
    Ok(written)
}

/// Scores restored images against references matched by file stem.
pub fn evaluate(restored: &Path, reference: &Path) -> Result<EvalReport> {
    let mut report = EvalReport::new(MetricConfig::default());
    if restored.is_file() && reference.is_file() {
        report.add(stem(restored), &read_rgb(restored)?, &read_rgb(reference)?)?;
        return Ok(report);
    }
    let refs = list_inputs(reference)?;
    for f in list_inputs(restored)? {
        let id = stem(&f);
        let r = refs
            .iter()
            .find(|r| stem(r) == id)
            .ok_or_else(|| CliError::MissingPair(id.clone()))?;
        report.add(id, &read_rgb(&f)?, &read_rgb(r)?)?;
    }
    Ok(report)
}

pub fn run_eval(restored: &Path, reference: &Path, report_path: Option<&Path>) -> Result<EvalReport> {
    let report = evaluate(restored, reference)?;
    if let Some(path) = report_path {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(path, report.to_jsonl()?).map_err(|e| CliError::io(path, e))?;
    }
    Ok(report)
}
