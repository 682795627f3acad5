use std::path::PathBuf;

use clap::{ArgMatches, Args};
use serde::Serialize;

use salsr::gan::train::TrainDiagnostics;

use crate::config::{ensure_dir, layered, snapshot};
use crate::error::CliResult;
use crate::flags::RunFlags;
use crate::run::{datasets, train_recorded, training_patches, TrainRun};

/// Trains the cascaded x2 generators: MSE pretraining, then the adversarial
/// phase with the saliency-augmented content loss.
///
/// The run directory gets `config.json`, one `generator_stage<k>.ckpt` and
/// `discriminator_stage<k>.ckpt` per stage, and a `stage<k>/` directory of
/// loss logs, intermediate checkpoints and sample grids.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Serialize)]
struct Summary {
    stages: usize,
    train_patches: usize,
    diagnostics: Vec<TrainDiagnostics>,
}

pub fn run(args: &TrainArgs, m: &ArgMatches) -> CliResult<()> {
    let cfg: TrainRun = layered(args.config.as_deref(), args.run.overrides(m, ""))?;
    cfg.validate()?;
    let hrs = training_patches(&cfg)?;
    let sets = datasets(&cfg, &hrs)?;
    ensure_dir(&cfg.out_dir)?;
    snapshot(&cfg.out_dir.join("config.json"), &cfg)?;
    let (stages, diagnostics) = train_recorded(&cfg, &sets)?;
    let summary = Summary { stages: stages.len(), train_patches: hrs.len(), diagnostics };
    snapshot(&cfg.out_dir.join("summary.json"), &summary)?;
    println!("trained {} stage(s) on {} patches into {}", stages.len(), hrs.len(), cfg.out_dir.display());
    Ok(())
}
