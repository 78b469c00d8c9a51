//! Joint single-image rain and haze removal with Haar-wavelet residual
//! networks and a dark-channel auxiliary target.

pub mod error;
pub mod features;
pub mod imageio;
pub mod metrics;
pub mod networks;
pub mod synth;
pub mod tensor_engine;
pub mod wavelet;

pub use error::{CheckpointError, Error, Result};
pub use tensor_engine::Tensor;
