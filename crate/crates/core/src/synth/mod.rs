//! Procedural LQ/HQ pair generation: additive rain streaks, atmospheric
//! haze over a depth map, and clean procedural scenes.

pub mod dataset;
pub mod haze;
pub mod rain;
pub mod scene;

pub use dataset::{
    degrade, generate_samples, load_pair, make_dataset, read_manifest, HazeParams, ManifestEntry, Sample, Split,
    SynthMode, SynthOptions, MANIFEST_FILE,
};
pub use haze::{apply_haze, generate_depth, DepthMode};
pub use rain::{apply_rain, generate_rain_layer, rain_layers, RainParams};
pub use scene::generate_scene;
