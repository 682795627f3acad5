use std::path::PathBuf;

use clap::{ArgMatches, Args};
use serde::{Deserialize, Serialize};

use salsr::imgcore::{load_image, save_plane, save_raw_map, Channel, RenderMode};
use salsr::saliency::{saliency_components, SaliencyConfig};

use crate::config::{ensure_dir, layered, overrides, snapshot};
use crate::error::{CliError, CliResult};
use crate::flags::SaliencyFlags;

/// Local saliency map of an image, with its curvature and compactness parts.
///
/// Writes `curvature.png`, `compactness.png` and a heatmap `saliency.png`,
/// plus raw float maps of the curvature, compactness, both uniqueness maps
/// and the fused saliency.
#[derive(Debug, Args)]
pub struct SaliencyArgs {
    /// Input image.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out", short = 'o', default_value_os_t = SaliencyRun::default().out_dir)]
    pub out_dir: PathBuf,
    /// Plane of a colour input the maps are computed on.
    #[arg(long, default_value = "luma", value_parser = ["luma", "red", "green", "blue"])]
    pub channel: String,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub saliency: SaliencyFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyRun {
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub channel: Channel,
    pub saliency: SaliencyConfig,
}

impl Default for SaliencyRun {
    fn default() -> Self {
        Self { input: None, out_dir: PathBuf::from("saliency"), channel: Channel::Luma, saliency: SaliencyConfig::default() }
    }
}

pub fn run(args: &SaliencyArgs, m: &ArgMatches) -> CliResult<()> {
    let mut flags = overrides!(m, "", args; input => "input", out_dir => "out_dir", channel => "channel");
    flags.extend(args.saliency.overrides(m, "saliency."));
    let cfg: SaliencyRun = layered(args.config.as_deref(), flags)?;
    let input = cfg.input.as_ref().ok_or_else(|| CliError::config("no input image (--input)"))?;
    cfg.saliency.validate()?;

    let gray = load_image(input)?.channel(cfg.channel);
    let c = saliency_components(&gray, &cfg.saliency)?;
    let out = &cfg.out_dir;
    ensure_dir(out)?;
    save_plane(&c.curvature, out.join("curvature.png"), RenderMode::Grayscale)?;
    save_plane(&c.compactness, out.join("compactness.png"), RenderMode::Grayscale)?;
    save_plane(c.saliency.plane(), out.join("saliency.png"), RenderMode::Heatmap)?;
    for (name, p) in [
        ("curvature", &c.curvature),
        ("compactness", &c.compactness),
        ("uniqueness_curvature", &c.d_curvature),
        ("uniqueness_compactness", &c.d_compactness),
        ("saliency", c.saliency.plane()),
    ] {
        save_raw_map(p, out.join(format!("{name}.raw")))?;
    }
    snapshot(&out.join("config.json"), &cfg)?;
    println!("saliency maps of {} written to {}", input.display(), out.display());
    Ok(())
}
