use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args};
use serde::{Deserialize, Serialize};

use salsr::gan::run::generator_path;
use salsr::gan::{pretrain_generator, train_gan, FeatureExtractor, GanStart, LossConfig, NoObserver};
use salsr::nn::{save_checkpoint, Network};

use crate::config::{ensure_dir, given, layered, overrides, snapshot};
use crate::error::{CliError, CliResult};
use crate::flags::RunFlags;
use crate::run::{datasets, evaluate_bicubic, evaluate_stages, holdout_patches, training_patches, HeldOut, TrainRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Wmse,
    Feat,
    Sal,
}

/// Loss-term ablation: pretrains the generators once, runs the adversarial
/// phase for every point of a weight grid with only the chosen content
/// terms enabled, and scores each result on held-out patches.
///
/// Writes `ablation.csv` (bicubic and pretrained baselines first, then one
/// row per grid point), `config.json`, and the generators of each point
/// under `<label>/`.
#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Content terms to keep; the weights of the others are forced to 0.
    #[arg(long, value_delimiter = ',', value_parser = ["wmse", "feat", "sal"], default_value = "wmse,feat,sal")]
    pub terms: Vec<String>,
    /// Weight axis `KEY=V1,V2,...` with KEY one of alpha, lambda_wmse,
    /// lambda_feat, lambda_sal; repeat for a cartesian grid.
    #[arg(long, value_name = "KEY=VALUES")]
    pub grid: Vec<String>,
    /// Generated held-out patches (synthetic data only).
    #[arg(long, default_value_t = AblateRun::default().holdout)]
    pub holdout: usize,
    /// Directory of held-out HR images; required when training from a directory.
    #[arg(long)]
    pub holdout_dir: Option<PathBuf>,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateRun {
    pub run: TrainRun,
    pub terms: Vec<Term>,
    pub grid: BTreeMap<String, Vec<f64>>,
    pub holdout: usize,
    pub holdout_dir: Option<PathBuf>,
}

impl Default for AblateRun {
    fn default() -> Self {
        Self {
            run: TrainRun::default(),
            terms: vec![Term::Wmse, Term::Feat, Term::Sal],
            grid: BTreeMap::new(),
            holdout: 50,
            holdout_dir: None,
        }
    }
}

fn parse_grid(axes: &[String]) -> CliResult<BTreeMap<String, Vec<f64>>> {
    let mut grid = BTreeMap::new();
    for axis in axes {
        let (key, values) =
            axis.split_once('=').ok_or_else(|| CliError::config(format!("grid axis {axis:?} is not KEY=V1,V2")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::config(format!("bad grid value {v:?} in {axis:?}"))))
            .collect::<CliResult<Vec<_>>>()?;
        grid.insert(key.trim().to_string(), values);
    }
    Ok(grid)
}

fn weight<'a>(l: &'a mut LossConfig, key: &str) -> CliResult<&'a mut f64> {
    Ok(match key {
        "alpha" => &mut l.alpha,
        "lambda_wmse" => &mut l.lambda_wmse,
        "lambda_feat" => &mut l.lambda_feat,
        "lambda_sal" => &mut l.lambda_sal,
        other => return Err(CliError::config(format!("unknown grid key {other:?}"))),
    })
}

fn term_of(key: &str) -> Option<Term> {
    match key {
        "lambda_wmse" => Some(Term::Wmse),
        "lambda_feat" => Some(Term::Feat),
        "lambda_sal" => Some(Term::Sal),
        _ => None,
    }
}

/// Every grid point as a label and its loss config.
fn grid_points(cfg: &AblateRun) -> CliResult<Vec<(String, LossConfig)>> {
    let mut base = cfg.run.loss.clone();
    for (term, key) in [(Term::Wmse, "lambda_wmse"), (Term::Feat, "lambda_feat"), (Term::Sal, "lambda_sal")] {
        if !cfg.terms.contains(&term) {
            *weight(&mut base, key)? = 0.0;
        }
    }
    let mut points = vec![(Vec::new(), base)];
    for (key, values) in &cfg.grid {
        if term_of(key).is_some_and(|t| !cfg.terms.contains(&t)) {
            return Err(CliError::config(format!("grid axis {key} belongs to a disabled term")));
        }
        if values.is_empty() {
            return Err(CliError::config(format!("grid axis {key} has no values")));
        }
        let mut next = Vec::new();
        for (label, l) in &points {
            for &v in values {
                let mut l = l.clone();
                *weight(&mut l, key)? = v;
                let mut label = label.clone();
                label.push(format!("{key}={v}"));
                next.push((label, l));
            }
        }
        points = next;
    }
    Ok(points
        .into_iter()
        .map(|(parts, l)| (if parts.is_empty() { "base".to_string() } else { parts.join("+") }, l))
        .collect())
}

#[derive(Serialize)]
struct Row<'a> {
    config: &'a str,
    alpha: Option<f64>,
    lambda_wmse: Option<f64>,
    lambda_feat: Option<f64>,
    lambda_sal: Option<f64>,
    psnr_db: f64,
    ssim: f64,
    rmse: f64,
    s3: Option<f64>,
}

impl<'a> Row<'a> {
    fn new(config: &'a str, l: Option<&LossConfig>, m: HeldOut) -> Self {
        Self {
            config,
            alpha: l.map(|l| l.alpha),
            lambda_wmse: l.map(|l| l.lambda_wmse),
            lambda_feat: l.map(|l| l.lambda_feat),
            lambda_sal: l.map(|l| l.lambda_sal),
            psnr_db: m.psnr_db,
            ssim: m.ssim,
            rmse: m.rmse,
            s3: m.s3,
        }
    }
}

fn save_stages(dir: &Path, stages: &[Network<f32>]) -> CliResult<()> {
    ensure_dir(dir)?;
    for (k, g) in stages.iter().enumerate() {
        save_checkpoint(&generator_path(dir, k + 1), g, None)?;
    }
    Ok(())
}

pub fn run(args: &AblateArgs, m: &ArgMatches) -> CliResult<()> {
    let mut flags = overrides!(m, "", args; terms => "terms", holdout => "holdout", holdout_dir => "holdout_dir");
    if given(m, "grid") {
        flags.push(("grid".into(), serde_json::to_value(parse_grid(&args.grid)?).expect("grid serializes")));
    }
    flags.extend(args.run.overrides(m, "run."));
    let cfg: AblateRun = layered(args.config.as_deref(), flags)?;
    cfg.run.validate()?;
    let points = grid_points(&cfg)?;
    for (_, l) in &points {
        l.validate()?;
    }
    let run = &cfg.run;
    let r = run.train.scale;
    let hrs = training_patches(run)?;
    let held = holdout_patches(run, cfg.holdout_dir.as_deref(), cfg.holdout)?;
    let sets = datasets(run, &hrs)?;
    let out = &run.out_dir;
    ensure_dir(out)?;
    snapshot(&out.join("config.json"), &cfg)?;

    let csv_path = out.join("ablation.csv");
    let mut csv = csv::Writer::from_path(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    let mut emit = |row: Row<'_>| -> CliResult<()> {
        println!(
            "{:<32} psnr {:.3} dB  ssim {:.4}  rmse {:.5}",
            row.config, row.psnr_db, row.ssim, row.rmse
        );
        csv.serialize(&row).map_err(|e| CliError::io(&csv_path, e))?;
        csv.flush().map_err(|e| CliError::io(&csv_path, e))
    };

    emit(Row::new("bicubic", None, evaluate_bicubic(&held, r)?))?;
    let pretrained = sets
        .iter()
        .map(|ds| Ok(pretrain_generator(ds, &run.generator, &run.train, &mut NoObserver)?))
        .collect::<CliResult<Vec<_>>>()?;
    save_stages(&out.join("pretrained"), &pretrained)?;
    emit(Row::new("pretrained", None, evaluate_stages(&held, r, &pretrained)?))?;

    for (label, loss) in &points {
        let fx = TrainRun { loss: loss.clone(), ..run.clone() }.features();
        let fx_ref = fx.as_ref().map(|f| f as &dyn FeatureExtractor<f64>);
        let mut stages = Vec::with_capacity(sets.len());
        for (ds, g) in sets.iter().zip(&pretrained) {
            let o = train_gan(ds, GanStart::Pretrained(g.clone()), &run.discriminator, loss, &run.train, fx_ref, &mut NoObserver)?;
            stages.push(o.g);
        }
        save_stages(&out.join(label), &stages)?;
        emit(Row::new(label, Some(loss), evaluate_stages(&held, r, &stages)?))?;
    }
    println!("ablation table written to {}", csv_path.display());
    Ok(())
}
