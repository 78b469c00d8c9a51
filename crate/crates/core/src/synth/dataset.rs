use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::haze::{apply_haze, generate_depth, DepthMode, DEPTH_FAR};
use super::rain::{apply_rain, rain_layers, RainParams};
use super::scene::generate_scene;
use crate::error::{Error, Result};
use crate::imageio::{quantize_tensor, read_gray_scaled, read_rgb, write_rgb};
use crate::tensor_engine::Tensor;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DEFAULT_SIZE: usize = 128;

/// Default sampling ranges for per-image degradation parameters.
pub const DENSITY_RANGE: (f32, f32) = (1.5, 3.5);
pub const INTENSITY_RANGE: (f32, f32) = (0.5, 0.9);
pub const AIRLIGHT_RANGE: (f32, f32) = (0.7, 1.0);
pub const BETA_RANGE: (f32, f32) = (0.4, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    Rain,
    RainHaze,
}

impl SynthMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthMode::Rain => "rain",
            SynthMode::RainHaze => "rain_haze",
        }
    }
}

impl std::str::FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rain" => Ok(SynthMode::Rain),
            "rain_haze" => Ok(SynthMode::RainHaze),
            other => Err(Error::invalid(
                "synth mode",
                format!("unknown mode {other:?}, expected rain or rain_haze"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazeParams {
    /// Gray atmospheric light, replicated on every channel.
    pub airlight: f32,
    pub beta: f32,
    pub depth: DepthMode,
    pub depth_seed: u64,
    /// Grayscale PNG depth map overriding `depth`; relative paths resolve against the `root` given to [`degrade`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_path: Option<String>,
}

/// One manifest row. Paths are relative to the dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub hq_path: String,
    pub lq_path: String,
    pub mode: SynthMode,
    pub seed: u64,
    pub rain_params: RainParams,
    pub haze_params: Option<HazeParams>,
    #[serde(default)]
    pub split: Split,
    /// Where the clean image came from: a source file or `None` for a procedural scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// An in-memory LQ/HQ pair.
#[derive(Clone, Debug)]
pub struct Sample {
    pub hq: Tensor<f32>,
    pub lq: Tensor<f32>,
    pub rain: RainParams,
    pub haze: Option<HazeParams>,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub mode: SynthMode,
    pub count: usize,
    pub seed: u64,
    /// Side of procedural scenes and of the center crop taken from source images.
    pub size: usize,
    /// Clean source images; procedural scenes when `None`.
    pub hq_dir: Option<PathBuf>,
    /// Grayscale PNG depth maps, matched to samples in sorted order and scaled to [0, `DEPTH_FAR`].
    pub depth_dir: Option<PathBuf>,
    pub density: Option<f32>,
    pub intensity: Option<f32>,
    pub beta: Option<f32>,
    pub airlight: Option<f32>,
    pub split: Split,
}

impl SynthOptions {
    pub fn new(mode: SynthMode, count: usize, seed: u64) -> Self {
        SynthOptions {
            mode,
            count,
            seed,
            size: DEFAULT_SIZE,
            hq_dir: None,
            depth_dir: None,
            density: None,
            intensity: None,
            beta: None,
            airlight: None,
            split: Split::Train,
        }
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no images in {}", dir.display())));
    }
    Ok(files)
}

fn center_crop(img: &Tensor<f32>, size: usize) -> Tensor<f32> {
    let [_, c, h, w] = img.dims();
    if h < size || w < size {
        return img.clone();
    }
    let (y0, x0) = ((h - size) / 2, (w - size) / 2);
    let mut out = Tensor::zeros([1, c, size, size]);
    for ch in 0..c {
        for y in 0..size {
            for x in 0..size {
                out.set(0, ch, y, x, img.at(0, ch, y0 + y, x0 + x));
            }
        }
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f32, f32)) -> f32 {
    rng.random_range(lo..=hi)
}

/// Draws the degradation parameters for sample `index`.
fn draw_params(opts: &SynthOptions, index: usize) -> (u64, RainParams, Option<HazeParams>) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(index as u64);
    let sample_seed: u64 = rng.random();
    let presets = RainParams::presets();
    let preset = presets[rng.random_range(0..presets.len())];
    let density = uniform(&mut rng, DENSITY_RANGE);
    let intensity = uniform(&mut rng, INTENSITY_RANGE);
    let rain = RainParams {
        density: opts.density.unwrap_or(density),
        intensity: opts.intensity.unwrap_or(intensity),
        seed: rng.random(),
        ..preset
    };
    let airlight = uniform(&mut rng, AIRLIGHT_RANGE);
    let beta = uniform(&mut rng, BETA_RANGE);
    let depth_seed = rng.random();
    let haze = (opts.mode == SynthMode::RainHaze).then(|| HazeParams {
        airlight: opts.airlight.unwrap_or(airlight),
        beta: opts.beta.unwrap_or(beta),
        depth: DepthMode::Fractal,
        depth_seed,
        depth_path: None,
    });
    (sample_seed, rain, haze)
}

/// Applies rain then, when present, haze to a clean image.
pub fn degrade(hq: &Tensor<f32>, rain: &RainParams, haze: Option<&HazeParams>, root: &Path) -> Result<Tensor<f32>> {
    let (h, w) = (hq.height(), hq.width());
    let rainy = apply_rain(hq, &rain_layers(h, w, rain)?)?;
    let Some(haze) = haze else {
        return Ok(rainy);
    };
    let depth = match &haze.depth_path {
        Some(p) => {
            let d = read_gray_scaled(root.join(p), DEPTH_FAR)?;
            if d.dims() != [1, 1, h, w] {
                return Err(Error::Dataset(format!(
                    "depth map {p} is {}x{}, image is {h}x{w}",
                    d.height(),
                    d.width()
                )));
            }
            d
        }
        None => generate_depth(h, w, haze.depth, haze.depth_seed),
    };
    apply_haze(&rainy, haze.airlight, haze.beta, &depth)
}

/// Synthesizes `opts.count` pairs in memory. The clean image is quantized to
/// 8 bits first so that a written dataset reloads to the same values.
pub fn generate_samples(opts: &SynthOptions) -> Result<Vec<(ManifestEntry, Sample)>> {
    if opts.count == 0 {
        return Err(Error::Dataset("count must be at least 1".into()));
    }
    if opts.size < 2 {
        return Err(Error::Dataset(format!("size {} is below 2", opts.size)));
    }
    let sources = opts.hq_dir.as_deref().map(list_images).transpose()?;
    let depths = opts.depth_dir.as_deref().map(list_images).transpose()?;

    let mut out = Vec::with_capacity(opts.count);
    for i in 0..opts.count {
        let (seed, rain, mut haze) = draw_params(opts, i);
        rain.validate()?;
        let (hq, source) = match &sources {
            Some(files) => {
                let f = &files[i % files.len()];
                (center_crop(&read_rgb(f)?, opts.size), Some(f.display().to_string()))
            }
            None => (generate_scene(opts.size, opts.size, seed), None),
        };
        let hq = quantize_tensor(&hq);
        if let (Some(h), Some(files)) = (haze.as_mut(), &depths) {
            h.depth_path = Some(files[i % files.len()].display().to_string());
        }
        let lq = degrade(&hq, &rain, haze.as_ref(), Path::new(""))?;
        let entry = ManifestEntry {
            hq_path: format!("hq/{i:04}.png"),
            lq_path: format!("lq/{i:04}.png"),
            mode: opts.mode,
            seed,
            rain_params: rain,
            haze_params: haze.clone(),
            split: opts.split,
            source,
        };
        out.push((
            entry,
            Sample {
                hq,
                lq,
                rain,
                haze,
                split: opts.split,
            },
        ));
    }
    Ok(out)
}

/// Writes `hq/NNNN.png`, `lq/NNNN.png` and `manifest.jsonl` under `out_dir`.
pub fn make_dataset(opts: &SynthOptions, out_dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let out_dir = out_dir.as_ref();
    let samples = generate_samples(opts)?;
    for sub in ["hq", "lq"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut manifest = String::new();
    let mut entries = Vec::with_capacity(samples.len());
    for (entry, sample) in samples {
        write_rgb(out_dir.join(&entry.hq_path), &sample.hq)?;
        write_rgb(out_dir.join(&entry.lq_path), &sample.lq)?;
        manifest.push_str(&serde_json::to_string(&entry)?);
        manifest.push('\n');
        entries.push(entry);
    }
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// Reads `manifest.jsonl` from a dataset directory, or a manifest file directly.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path.push(MANIFEST_FILE);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), n + 1))))
        .collect::<Result<Vec<ManifestEntry>>>()?;
    if entries.is_empty() {
        return Err(Error::Dataset(format!("{} has no rows", path.display())));
    }
    Ok(entries)
}

/// Loads `(lq, hq)` for a manifest row.
pub fn load_pair(root: &Path, entry: &ManifestEntry) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let lq = read_rgb(root.join(&entry.lq_path))?;
    let hq = read_rgb(root.join(&entry.hq_path))?;
    if lq.dims() != hq.dims() {
        return Err(Error::Dataset(format!(
            "{} and {} differ in size",
            entry.lq_path, entry.hq_path
        )));
    }
    Ok((lq, hq))
}
