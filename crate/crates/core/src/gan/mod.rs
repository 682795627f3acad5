//! Generator and discriminator, the saliency-augmented generator objective,
//! two-phase training, and cascaded ×2 inference.

pub mod arch;
pub mod cascade;
pub mod feature;
pub mod loss;
pub mod run;
pub mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use arch::{build_discriminator, build_generator, dense_input_features, DiscriminatorSpec, GeneratorSpec};
pub use cascade::{apply_stage, super_resolve, super_resolve_plane};
pub use feature::{ConvFeatures, FeatureExtractor, IdentityFeatures};
pub use loss::{
    content_loss_and_grad, loss_discriminator, loss_feature, loss_generator_adv, loss_saliency, loss_weighted_mse,
    loss_weighted_mse_form, total_generator_loss, HrTarget, LossConfig, LossTerms, WmseForm,
};
pub use train::{
    cascade_datasets, extract_patches, pretrain_generator, train_gan, Dataset, GanOutcome, GanStart, LossRow,
    MemoryLog, NoObserver, Pair, Phase, TrainConfig, TrainObserver,
};

use crate::degrade::DegradeError;
use crate::imgcore::ImageError;
use crate::nn::NnError;
use crate::saliency::SaliencyError;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("probability {0} is outside (0, 1)")]
    Probability(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("scale x{scale} needs {expected} stages, got {got}")]
    StageCount { scale: u32, expected: usize, got: usize },
    #[error("training diverged in {phase} phase at iteration {iter}: {detail}")]
    Divergence { phase: Phase, iter: usize, detail: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}
