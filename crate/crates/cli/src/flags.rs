//! Flag groups shared by several commands. Every default shown by `--help`
//! is read from the library's own `Default` impls.

use std::path::PathBuf;

use clap::{ArgAction, ArgMatches, Args};
use salsr::gan::{DiscriminatorSpec, GeneratorSpec, LossConfig, TrainConfig};
use salsr::nn::AdamConfig;
use salsr::saliency::SaliencyConfig;

use crate::config::{overrides, Override};
use crate::run::TrainRun;

#[derive(Debug, Args)]
#[command(next_help_heading = "Saliency")]
pub struct SaliencyFlags {
    /// Weight of the curvature branch in the fusion, in [0,1].
    #[arg(long, default_value_t = SaliencyConfig::default().w1)]
    pub w1: f64,
    /// Side of the square entropy window (odd).
    #[arg(long, default_value_t = SaliencyConfig::default().entropy_window)]
    pub entropy_window: usize,
    /// Histogram bins of the entropy filter.
    #[arg(long, default_value_t = SaliencyConfig::default().entropy_bins)]
    pub entropy_bins: usize,
    /// Side of the Gaussian smoothing kernel applied to the entropy map (odd).
    #[arg(long, default_value_t = SaliencyConfig::default().smooth_size)]
    pub smooth_size: usize,
    #[arg(long, default_value_t = SaliencyConfig::default().smooth_sigma)]
    pub smooth_sigma: f64,
    /// Neighbourhood side of the uniqueness sum; 0 sums over the whole image.
    #[arg(long, default_value_t = SaliencyConfig::default().uniqueness_window)]
    pub uniqueness_window: usize,
}

impl SaliencyFlags {
    pub fn overrides(&self, m: &ArgMatches, prefix: &str) -> Vec<Override> {
        overrides!(m, prefix, self;
            w1 => "w1",
            entropy_window => "entropy_window",
            entropy_bins => "entropy_bins",
            smooth_size => "smooth_size",
            smooth_sigma => "smooth_sigma",
            uniqueness_window => "uniqueness_window",
        )
    }
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Data")]
pub struct DataFlags {
    /// Directory of HR training images (PNG/PNM); luma patches are cropped from them.
    #[arg(long, alias = "data")]
    pub data_dir: Option<PathBuf>,
    /// Train on N generated vessel patches instead of a directory.
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,
    /// Random crops taken from each training image.
    #[arg(long, default_value_t = TrainRun::default().patches_per_image)]
    pub patches_per_image: usize,
    /// Output directory of the run.
    #[arg(long = "out", short = 'o', default_value_os_t = TrainRun::default().out_dir)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Training")]
pub struct TrainFlags {
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    pub seed: u64,
    /// Total upscaling factor (2, 4, 8 or 16), trained as cascaded x2 stages.
    #[arg(long, default_value_t = TrainConfig::default().scale.get())]
    pub scale: u32,
    #[arg(long, default_value_t = TrainConfig::default().pretrain_iters)]
    pub pretrain_iters: usize,
    #[arg(long, default_value_t = TrainConfig::default().pretrain_lr)]
    pub pretrain_lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().gan_iters)]
    pub gan_iters: usize,
    #[arg(long, default_value_t = TrainConfig::default().gan_lr)]
    pub gan_lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    /// Side of the square HR training patches.
    #[arg(long, default_value_t = TrainConfig::default().patch_size)]
    pub patch_size: usize,
    /// Discriminator updates per iteration.
    #[arg(long, default_value_t = TrainConfig::default().d_steps)]
    pub d_steps: usize,
    /// Generator updates per iteration.
    #[arg(long, default_value_t = TrainConfig::default().g_steps)]
    pub g_steps: usize,
    /// Iterations between checkpoints; 0 keeps only the final ones.
    #[arg(long, default_value_t = TrainConfig::default().checkpoint_every)]
    pub checkpoint_every: usize,
    /// Iterations between sample grids; 0 disables them.
    #[arg(long, default_value_t = TrainConfig::default().sample_every)]
    pub sample_every: usize,
    #[arg(long, default_value_t = AdamConfig::default().beta1)]
    pub adam_beta1: f64,
    #[arg(long, default_value_t = AdamConfig::default().beta2)]
    pub adam_beta2: f64,
    #[arg(long, default_value_t = AdamConfig::default().eps)]
    pub adam_eps: f64,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Networks")]
pub struct ModelFlags {
    #[arg(long, default_value_t = GeneratorSpec::default().n_residual_blocks)]
    pub residual_blocks: usize,
    /// Generator feature channels.
    #[arg(long, default_value_t = GeneratorSpec::default().base_channels)]
    pub g_channels: usize,
    /// Generator convolution size (odd).
    #[arg(long, default_value_t = GeneratorSpec::default().kernel)]
    pub g_kernel: usize,
    #[arg(long, default_value_t = DiscriminatorSpec::default().n_conv_layers)]
    pub d_layers: usize,
    /// Channels of the first discriminator convolution.
    #[arg(long, default_value_t = DiscriminatorSpec::default().base_channels)]
    pub d_channels: usize,
    /// Width of the discriminator's hidden dense layer.
    #[arg(long, default_value_t = DiscriminatorSpec::default().dense_width)]
    pub d_dense: usize,
    #[arg(long, default_value_t = DiscriminatorSpec::default().leaky_slope)]
    pub d_leaky_slope: f64,
    #[arg(long, default_value_t = DiscriminatorSpec::default().batch_norm, action = ArgAction::Set)]
    pub d_batch_norm: bool,
    /// Channels of the frozen feature extractor.
    #[arg(long, default_value_t = TrainRun::default().feature_width)]
    pub feature_width: usize,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Loss")]
pub struct LossFlags {
    /// Weight of the adversarial term.
    #[arg(long, default_value_t = LossConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda_wmse)]
    pub lambda_wmse: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda_feat)]
    pub lambda_feat: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda_sal)]
    pub lambda_sal: f64,
    /// Saliency-weighted MSE variant.
    #[arg(long, default_value = "verbatim", value_parser = ["verbatim", "error-weighted"])]
    pub wmse_form: String,
}

/// Everything a training run is configured by.
#[derive(Debug, Args)]
pub struct RunFlags {
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub loss: LossFlags,
    #[command(flatten)]
    pub saliency: SaliencyFlags,
}

impl RunFlags {
    /// Overrides for a [`TrainRun`] stored at `prefix`.
    pub fn overrides(&self, m: &ArgMatches, prefix: &str) -> Vec<Override> {
        let (d, t, g, l) = (&self.data, &self.train, &self.model, &self.loss);
        let mut out = overrides!(m, prefix, d;
            data_dir => "data_dir",
            synthetic => "synthetic",
            patches_per_image => "patches_per_image",
            out_dir => "out_dir",
        );
        out.extend(overrides!(m, prefix, t;
            seed => "train.seed",
            scale => "train.scale",
            pretrain_iters => "train.pretrain_iters",
            pretrain_lr => "train.pretrain_lr",
            gan_iters => "train.gan_iters",
            gan_lr => "train.gan_lr",
            batch_size => "train.batch_size",
            patch_size => "train.patch_size",
            d_steps => "train.d_steps",
            g_steps => "train.g_steps",
            checkpoint_every => "train.checkpoint_every",
            sample_every => "train.sample_every",
            adam_beta1 => "train.adam.beta1",
            adam_beta2 => "train.adam.beta2",
            adam_eps => "train.adam.eps",
        ));
        out.extend(overrides!(m, prefix, g;
            residual_blocks => "generator.n_residual_blocks",
            g_channels => "generator.base_channels",
            g_kernel => "generator.kernel",
            d_layers => "discriminator.n_conv_layers",
            d_channels => "discriminator.base_channels",
            d_dense => "discriminator.dense_width",
            d_leaky_slope => "discriminator.leaky_slope",
            d_batch_norm => "discriminator.batch_norm",
            feature_width => "feature_width",
        ));
        out.extend(overrides!(m, prefix, l;
            alpha => "loss.alpha",
            lambda_wmse => "loss.lambda_wmse",
            lambda_feat => "loss.lambda_feat",
            lambda_sal => "loss.lambda_sal",
            wmse_form => "loss.wmse_form",
        ));
        out.extend(self.saliency.overrides(m, &format!("{prefix}loss.saliency.")));
        out
    }
}
