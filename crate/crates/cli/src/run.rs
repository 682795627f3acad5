//! Training runs shared by `train` and `ablate`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use salsr::degrade::{bicubic_upscale, make_lr, ScaleFactor};
use salsr::gan::run::StageRecorder;
use salsr::gan::train::TrainDiagnostics;
use salsr::gan::{
    cascade_datasets, extract_patches, super_resolve_plane, train_gan, ConvFeatures, Dataset, DiscriminatorSpec,
    FeatureExtractor, GanStart, GeneratorSpec, LossConfig, TrainConfig,
};
use salsr::imgcore::{load_image, to_y_channel, Plane};
use salsr::metrics::{psnr, rmse, s3_sharpness, ssim, S3_MIN_SIDE};
use salsr::nn::Network;
use salsr::synth::vessel_patches;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub data_dir: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub patches_per_image: usize,
    pub out_dir: PathBuf,
    pub feature_width: usize,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub loss: LossConfig,
    pub train: TrainConfig,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            data_dir: None,
            synthetic: None,
            patches_per_image: 8,
            out_dir: PathBuf::from("run"),
            feature_width: ConvFeatures::<f64>::DEFAULT_WIDTH,
            generator: GeneratorSpec::default(),
            discriminator: DiscriminatorSpec::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl TrainRun {
    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        self.loss.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.generator.image_channels != 1 || self.discriminator.image_channels != 1 {
            return Err(CliError::config("training runs on luma patches; image_channels must be 1"));
        }
        if self.feature_width == 0 {
            return Err(CliError::config("feature_width must be positive"));
        }
        Ok(())
    }

    pub fn features(&self) -> Option<ConvFeatures<f64>> {
        (self.loss.lambda_feat > 0.0)
            .then(|| ConvFeatures::new(1, self.feature_width, ConvFeatures::<f64>::DEFAULT_SEED))
    }
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
}

/// Luma planes of every image in `dir`, in file-name order.
pub fn load_dir(dir: &Path) -> CliResult<Vec<Plane>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::config(format!("{}: no PNG/PNM images found", dir.display())));
    }
    files.iter().map(|f| Ok(to_y_channel(&load_image(f)?))).collect()
}

/// Offset of the held-out synthetic stream from the training seed.
const HOLDOUT_SEED: u64 = 0x686f_6c64;

/// HR training patches of a run.
pub fn training_patches(run: &TrainRun) -> CliResult<Vec<Plane>> {
    let size = run.train.patch_size;
    match (&run.data_dir, run.synthetic) {
        (Some(dir), None) => {
            let planes = load_dir(dir)?;
            Ok(extract_patches(&planes, size, run.patches_per_image, run.train.seed)?)
        }
        (None, Some(n)) => Ok(vessel_patches(n, size, run.train.seed)),
        (Some(_), Some(_)) => Err(CliError::config("data_dir and synthetic are mutually exclusive")),
        (None, None) => Err(CliError::config("no training data: give --data-dir DIR or --synthetic N")),
    }
}

/// Held-out HR patches: crops of `dir` when given, otherwise `n` generated
/// patches from a stream disjoint from the training one.
pub fn holdout_patches(run: &TrainRun, dir: Option<&Path>, n: usize) -> CliResult<Vec<Plane>> {
    let size = run.train.patch_size;
    let out = match dir {
        Some(dir) => extract_patches(&load_dir(dir)?, size, run.patches_per_image, run.train.seed ^ HOLDOUT_SEED)?,
        None if run.data_dir.is_none() => vessel_patches(n, size, run.train.seed ^ HOLDOUT_SEED),
        None => return Err(CliError::config("training from a directory needs --holdout-dir for evaluation")),
    };
    if out.is_empty() {
        return Err(CliError::config("the held-out set is empty"));
    }
    Ok(out)
}

/// Trains every cascade stage with logs, checkpoints and samples under
/// `run.out_dir`.
pub fn train_recorded(run: &TrainRun, datasets: &[Dataset]) -> CliResult<(Vec<Network<f32>>, Vec<TrainDiagnostics>)> {
    let fx = run.features();
    let fx_ref = fx.as_ref().map(|f| f as &dyn FeatureExtractor<f64>);
    let mut stages = Vec::new();
    let mut diags = Vec::new();
    for (k, ds) in datasets.iter().enumerate() {
        let previews = ds.pairs().iter().take(4).cloned().collect();
        let mut rec = StageRecorder::create(&run.out_dir, k + 1, previews)?;
        let out = train_gan(
            ds,
            GanStart::Pretrain(run.generator.clone()),
            &run.discriminator,
            &run.loss,
            &run.train,
            fx_ref,
            &mut rec,
        )?;
        stages.push(out.g);
        diags.push(out.diagnostics);
    }
    Ok((stages, diags))
}

pub fn datasets(run: &TrainRun, hrs: &[Plane]) -> CliResult<Vec<Dataset>> {
    Ok(cascade_datasets(hrs, run.train.scale)?)
}

/// Mean metrics over a held-out set. S3 is left out when the patches are
/// smaller than its block grid needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeldOut {
    pub psnr_db: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub s3: Option<f64>,
}

pub fn evaluate(hrs: &[Plane], r: ScaleFactor, mut upscale: impl FnMut(&Plane) -> CliResult<Plane>) -> CliResult<HeldOut> {
    let n = hrs.len() as f64;
    let (mut p, mut s, mut e, mut sh) = (0.0, 0.0, 0.0, 0.0);
    let with_s3 = hrs[0].width() >= S3_MIN_SIDE && hrs[0].height() >= S3_MIN_SIDE;
    for hr in hrs {
        let sr = upscale(&make_lr(hr, r)?)?;
        p += psnr(hr, &sr)?;
        s += ssim(hr, &sr)?;
        e += rmse(hr, &sr)?;
        if with_s3 {
            sh += s3_sharpness(&sr)?;
        }
    }
    Ok(HeldOut { psnr_db: p / n, ssim: s / n, rmse: e / n, s3: with_s3.then_some(sh / n) })
}

pub fn evaluate_bicubic(hrs: &[Plane], r: ScaleFactor) -> CliResult<HeldOut> {
    evaluate(hrs, r, |lr| Ok(bicubic_upscale(lr, r)))
}

pub fn evaluate_stages(hrs: &[Plane], r: ScaleFactor, stages: &[Network<f32>]) -> CliResult<HeldOut> {
    evaluate(hrs, r, |lr| Ok(super_resolve_plane(stages, lr, r)?))
}
