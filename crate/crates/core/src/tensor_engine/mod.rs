//! Small deterministic tensor library: rank-4 tensors, a define-by-run graph
//! with reverse-mode gradients, AdamW, and the binary checkpoint format.

mod adam;
pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod graph;
mod params;
mod scalar;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvGrads};
pub use graph::{frobenius_sq, Gradients, Graph, NodeId};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::{concat_channels, split_channels, Tensor};
