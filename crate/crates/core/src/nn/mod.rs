//! Minimal CNN substrate: NCHW tensors, a layer chain with exact reverse-mode
//! gradients, Adam, binary checkpoints, and finite-difference checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod tensor;

use std::path::PathBuf;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState, StepOutcome};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{GradCheck, GradReport};
pub use layers::{pixel_shuffle, pixel_unshuffle, Layer, LayerSpec, Mode, LEAKY_SLOPE};
pub use network::Network;
pub use tensor::{Scalar, Shape4, Tensor4};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: invalid spec: {detail}")]
    InvalidSpec { layer: usize, detail: String },
    #[error("layer {layer}: shape mismatch: {detail}")]
    Shape { layer: usize, detail: String },
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("optimizer state mismatch: {0}")]
    OptimizerMismatch(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}
