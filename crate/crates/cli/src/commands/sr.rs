use std::path::PathBuf;

use clap::{ArgMatches, Args};
use serde::{Deserialize, Serialize};

use salsr::degrade::ScaleFactor;
use salsr::gan::run::generator_path;
use salsr::gan::{super_resolve, GanError};
use salsr::imgcore::{load_image, save_rgb};
use salsr::nn::load_checkpoint;

use crate::config::{layered, overrides, snapshot};
use crate::error::{CliError, CliResult};

/// Super-resolves an LR image with a cascade of trained x2 generators.
/// Single-channel generators run on each colour channel separately.
#[derive(Debug, Args)]
pub struct SrArgs {
    /// LR input image.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// SR output image (PNG); the effective config goes next to it as JSON.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = SrRun::default().scale.get())]
    pub scale: u32,
    /// Generator checkpoints in cascade order, comma separated; log2(scale) are needed.
    #[arg(long, value_delimiter = ',')]
    pub stages: Vec<PathBuf>,
    /// Training run directory to take the stage generators from instead.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrRun {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub scale: ScaleFactor,
    pub stages: Vec<PathBuf>,
    pub run_dir: Option<PathBuf>,
}

impl Default for SrRun {
    fn default() -> Self {
        Self { input: None, output: None, scale: ScaleFactor::X4, stages: Vec::new(), run_dir: None }
    }
}

fn stage_paths(cfg: &SrRun) -> CliResult<Vec<PathBuf>> {
    match (&cfg.run_dir, cfg.stages.is_empty()) {
        (Some(_), false) => Err(CliError::config("give either --stages or --run-dir, not both")),
        (None, true) => Err(CliError::config("no generators: give --stages or --run-dir")),
        (None, false) => Ok(cfg.stages.clone()),
        (Some(dir), true) => {
            let found: Vec<PathBuf> =
                (1..).map(|k| generator_path(dir, k)).take_while(|p| p.is_file()).collect();
            if found.is_empty() {
                return Err(CliError::io(dir, "no generator_stage<k>.ckpt files"));
            }
            Ok(found)
        }
    }
}

pub fn run(args: &SrArgs, m: &ArgMatches) -> CliResult<()> {
    let flags = overrides!(m, "", args;
        input => "input", output => "output", scale => "scale", stages => "stages", run_dir => "run_dir");
    let cfg: SrRun = layered(args.config.as_deref(), flags)?;
    let input = cfg.input.as_ref().ok_or_else(|| CliError::config("no input image (--input)"))?;
    let output = cfg.output.as_ref().ok_or_else(|| CliError::config("no output path (--output)"))?;
    let paths = stage_paths(&cfg)?;
    let expected = cfg.scale.stages();
    if paths.len() != expected {
        return Err(GanError::StageCount { scale: cfg.scale.get(), expected, got: paths.len() }.into());
    }
    let stages = paths.iter().map(|p| Ok(load_checkpoint::<f32>(p)?.network)).collect::<CliResult<Vec<_>>>()?;
    let lr = load_image(input)?;
    let sr = super_resolve(&stages, &lr, cfg.scale)?;
    save_rgb(&sr, output)?;
    snapshot(&output.with_extension("json"), &cfg)?;
    println!("x{} result written to {}", cfg.scale, output.display());
    Ok(())
}
