use std::path::PathBuf;

use clap::{ArgMatches, Args};
use serde::{Deserialize, Serialize};

use salsr::degrade::{bicubic_upscale, make_lr, DegradeParams, ScaleFactor};
use salsr::imgcore::{load_image, save_rgb};

use crate::config::{layered, overrides, snapshot};
use crate::error::{CliError, CliResult};

/// Synthesizes the LR image of an HR image: Gaussian blur with sigma = r/2,
/// then decimation by r. A JSON sidecar next to the output records the
/// effective config and the degradation parameters.
#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// HR input image; both sides must be multiples of the scale.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// LR output image (PNG).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = DegradeRun::default().scale.get())]
    pub scale: u32,
    /// Also write the bicubic upscaling of the LR image here.
    #[arg(long)]
    pub bicubic: Option<PathBuf>,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeRun {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub scale: ScaleFactor,
    pub bicubic: Option<PathBuf>,
}

impl Default for DegradeRun {
    fn default() -> Self {
        Self { input: None, output: None, scale: ScaleFactor::X4, bicubic: None }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a DegradeRun,
    params: DegradeParams,
    hr_size: [usize; 2],
    lr_size: [usize; 2],
}

pub fn run(args: &DegradeArgs, m: &ArgMatches) -> CliResult<()> {
    let flags = overrides!(m, "", args; input => "input", output => "output", scale => "scale", bicubic => "bicubic");
    let cfg: DegradeRun = layered(args.config.as_deref(), flags)?;
    let input = cfg.input.as_ref().ok_or_else(|| CliError::config("no input image (--input)"))?;
    let output = cfg.output.as_ref().ok_or_else(|| CliError::config("no output path (--output)"))?;

    let hr = load_image(input)?;
    let lr = make_lr(&hr, cfg.scale)?;
    save_rgb(&lr, output)?;
    if let Some(b) = &cfg.bicubic {
        save_rgb(&bicubic_upscale(&lr, cfg.scale), b)?;
    }
    let (w, h) = hr.dims();
    let (lw, lh) = lr.dims();
    let sidecar = Sidecar { config: &cfg, params: DegradeParams::for_scale(cfg.scale), hr_size: [w, h], lr_size: [lw, lh] };
    snapshot(&output.with_extension("json"), &sidecar)?;
    println!("{}x{} -> {}x{} written to {}", w, h, lw, lh, output.display());
    Ok(())
}
