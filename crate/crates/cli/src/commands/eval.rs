use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args};
use serde::{Deserialize, Serialize};

use salsr::degrade::ScaleFactor;
use salsr::imgcore::load_image;
use salsr::metrics::evaluate_pair;
use salsr::stats::{wilcoxon_signed_rank, PMethod, PairedSample};
use salsr::ErrorKind;

use crate::config::{layered, overrides};
use crate::error::{CliError, CliResult};

pub const CSV_HEADER: [&str; 6] = ["image", "scale", "ssim", "rmse", "psnr_db", "s3"];
const METRICS: [&str; 4] = ["ssim", "rmse", "psnr_db", "s3"];

/// Full-reference metrics (SSIM, RMSE, PSNR, S3) on the Y channel, printed
/// as one JSON line. With `--compare`, runs a Wilcoxon signed-rank test on
/// one metric between two metric CSVs instead.
#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth HR image.
    #[arg(long)]
    pub hr: Option<PathBuf>,
    /// Super-resolved image of the same size.
    #[arg(long)]
    pub sr: Option<PathBuf>,
    #[arg(long, default_value_t = EvalRun::default().scale.get())]
    pub scale: u32,
    /// Append the metrics as a row to this CSV (header written when new).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Image label for the CSV row; defaults to the SR file name.
    #[arg(long)]
    pub name: Option<String>,
    /// Two metric CSVs (baseline, candidate) to compare image by image.
    #[arg(long, num_args = 2, value_names = ["BASELINE", "CANDIDATE"])]
    pub compare: Vec<PathBuf>,
    /// Metric column tested by --compare.
    #[arg(long, default_value = "psnr_db", value_parser = METRICS)]
    pub metric: String,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub hr: Option<PathBuf>,
    pub sr: Option<PathBuf>,
    pub scale: ScaleFactor,
    pub csv: Option<PathBuf>,
    pub name: Option<String>,
    pub compare: Vec<PathBuf>,
    pub metric: String,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            hr: None,
            sr: None,
            scale: ScaleFactor::X4,
            csv: None,
            name: None,
            compare: Vec::new(),
            metric: "psnr_db".into(),
        }
    }
}

#[derive(Serialize)]
struct Comparison<'a> {
    metric: &'a str,
    w: f64,
    n: usize,
    p: f64,
    method: PMethod,
}

pub fn run(args: &EvalArgs, m: &ArgMatches) -> CliResult<()> {
    let flags = overrides!(m, "", args;
        hr => "hr", sr => "sr", scale => "scale", csv => "csv", name => "name", compare => "compare", metric => "metric");
    let cfg: EvalRun = layered(args.config.as_deref(), flags)?;
    if !cfg.compare.is_empty() {
        return compare(&cfg);
    }
    let hr_path = cfg.hr.as_ref().ok_or_else(|| CliError::config("no HR image (--hr)"))?;
    let sr_path = cfg.sr.as_ref().ok_or_else(|| CliError::config("no SR image (--sr)"))?;
    let report = evaluate_pair(&load_image(hr_path)?, &load_image(sr_path)?, cfg.scale)?;
    println!("{}", serde_json::to_string(&report).expect("reports serialize"));
    if let Some(csv) = &cfg.csv {
        let name = match &cfg.name {
            Some(n) => n.clone(),
            None => sr_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        let row = [
            name,
            report.scale.to_string(),
            report.ssim.to_string(),
            report.rmse.to_string(),
            report.psnr_text(),
            report.s3.to_string(),
        ];
        append_row(csv, &row)?;
    }
    Ok(())
}

fn append_row(path: &Path, row: &[String]) -> CliResult<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER).map_err(|e| CliError::io(path, e))?;
    }
    w.write_record(row).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `(image, value)` rows of one metric column.
fn read_metric(path: &Path, metric: &str) -> CliResult<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let headers = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("{}: no {name:?} column", path.display())))
    };
    let (ci, cm) = (col("image")?, col(metric)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let value: f64 = rec[cm]
            .parse()
            .map_err(|_| CliError::config(format!("{}: bad {metric} value {:?}", path.display(), &rec[cm])))?;
        out.push((rec[ci].to_string(), value));
    }
    Ok(out)
}

fn compare(cfg: &EvalRun) -> CliResult<()> {
    let [base, cand] = cfg.compare.as_slice() else {
        return Err(CliError::config("--compare takes exactly two CSV files"));
    };
    let a = read_metric(base, &cfg.metric)?;
    let b: HashMap<String, f64> = read_metric(cand, &cfg.metric)?.into_iter().collect();
    if a.len() != b.len() {
        return Err(CliError {
            kind: ErrorKind::Shape,
            message: format!("{} has {} rows but {} has {}", base.display(), a.len(), cand.display(), b.len()),
        });
    }
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (name, v) in &a {
        let w = b.get(name).ok_or_else(|| CliError {
            kind: ErrorKind::Shape,
            message: format!("image {name:?} is missing from {}", cand.display()),
        })?;
        xs.push(*w);
        ys.push(*v);
    }
    let r = wilcoxon_signed_rank(&PairedSample::new(xs, ys)?)?;
    let out = Comparison { metric: &cfg.metric, w: r.w_statistic, n: r.n, p: r.p_two_sided, method: r.method };
    println!("{}", serde_json::to_string(&out).expect("results serialize"));
    Ok(())
}
