//! On-disk layout of a training run.
//!
//! ```text
//! <root>/config.json                  effective configuration
//! <root>/generator_stage<k>.ckpt      final generator of stage k (1-based)
//! <root>/discriminator_stage<k>.ckpt  final discriminator of stage k
//! <root>/stage<k>/pretrain_log.csv    iter,l_mse
//! <root>/stage<k>/loss_log.csv        iter,l_wmse,l_feat,l_sal,l_gen,l_total,d_loss
//! <root>/stage<k>/checkpoints/        <phase>_g_<iter>.ckpt, gan_d_<iter>.ckpt
//! <root>/stage<k>/samples/            <phase>_<iter>.png: rows of bicubic | SR | HR
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::cascade::apply_stage;
use super::train::{LossRow, Pair, Phase, Snapshot, TrainObserver};
use super::GanError;
use crate::degrade::{bicubic_upscale, ScaleFactor};
use crate::imgcore::{save_plane, Plane, RenderMode};
use crate::nn::{save_checkpoint, Network};

fn io_err(path: &Path, source: std::io::Error) -> GanError {
    GanError::Io { path: path.to_path_buf(), source }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), GanError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| GanError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn generator_path(root: &Path, stage: usize) -> PathBuf {
    root.join(format!("generator_stage{stage}.ckpt"))
}

pub fn discriminator_path(root: &Path, stage: usize) -> PathBuf {
    root.join(format!("discriminator_stage{stage}.ckpt"))
}

/// Observer writing one stage's logs, checkpoints and samples.
pub struct StageRecorder {
    root: PathBuf,
    dir: PathBuf,
    stage: usize,
    pretrain_log: BufWriter<File>,
    loss_log: BufWriter<File>,
    previews: Vec<Pair>,
}

impl StageRecorder {
    /// Creates `<root>/stage<stage>/`; `previews` feed the sample grids.
    pub fn create(root: &Path, stage: usize, previews: Vec<Pair>) -> Result<Self, GanError> {
        let dir = root.join(format!("stage{stage}"));
        for d in [dir.join("checkpoints"), dir.join("samples")] {
            fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        }
        let open = |name: &str, header: &str| -> Result<BufWriter<File>, GanError> {
            let p = dir.join(name);
            let mut w = BufWriter::new(File::create(&p).map_err(|e| io_err(&p, e))?);
            writeln!(w, "{header}").map_err(|e| io_err(&p, e))?;
            Ok(w)
        };
        Ok(Self {
            pretrain_log: open("pretrain_log.csv", "iter,l_mse")?,
            loss_log: open("loss_log.csv", LossRow::HEADER)?,
            root: root.to_path_buf(),
            dir,
            stage,
            previews,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn flush(&mut self) -> Result<(), GanError> {
        let p = self.dir.clone();
        self.pretrain_log.flush().map_err(|e| io_err(&p, e))?;
        self.loss_log.flush().map_err(|e| io_err(&p, e))
    }

    fn grid(&self, g: &Network<f32>) -> Result<Option<Plane>, GanError> {
        if self.previews.is_empty() {
            return Ok(None);
        }
        let (w, h) = self.previews[0].hr.dims();
        let rows = self.previews.len();
        let gap = 2;
        let mut out = Plane::zeros(3 * w + 2 * gap, rows * h + (rows - 1) * gap);
        for (r, p) in self.previews.iter().enumerate() {
            let cells = [bicubic_upscale(&p.lr, ScaleFactor::X2), apply_stage(g, &p.lr)?, p.hr.clone()];
            for (c, cell) in cells.iter().enumerate() {
                for y in 0..h {
                    for x in 0..w {
                        out.set(c * (w + gap) + x, r * (h + gap) + y, cell.get(x, y).clamp(0.0, 1.0));
                    }
                }
            }
        }
        Ok(Some(out))
    }
}

impl TrainObserver for StageRecorder {
    fn pretrain_row(&mut self, iter: usize, mse: f64) -> Result<(), GanError> {
        let p = self.dir.join("pretrain_log.csv");
        writeln!(self.pretrain_log, "{iter},{mse}").map_err(|e| io_err(&p, e))
    }

    fn gan_row(&mut self, row: &LossRow) -> Result<(), GanError> {
        let p = self.dir.join("loss_log.csv");
        writeln!(self.loss_log, "{}", row.csv()).map_err(|e| io_err(&p, e))
    }

    fn checkpoint(&mut self, s: &Snapshot<'_>) -> Result<(), GanError> {
        self.flush()?;
        let ck = self.dir.join("checkpoints");
        save_checkpoint(&ck.join(format!("{}_g_{:06}.ckpt", s.phase, s.iter)), s.g, Some(s.g_adam))?;
        if let Some((d, d_adam)) = s.d {
            save_checkpoint(&ck.join(format!("{}_d_{:06}.ckpt", s.phase, s.iter)), d, Some(d_adam))?;
        }
        if s.last && s.phase == Phase::Gan {
            save_checkpoint(&generator_path(&self.root, self.stage), s.g, None)?;
            if let Some((d, _)) = s.d {
                save_checkpoint(&discriminator_path(&self.root, self.stage), d, None)?;
            }
        }
        Ok(())
    }

    fn sample(&mut self, phase: Phase, iter: usize, g: &Network<f32>) -> Result<(), GanError> {
        if let Some(grid) = self.grid(g)? {
            save_plane(&grid, self.dir.join("samples").join(format!("{phase}_{iter:06}.png")), RenderMode::Grayscale)?;
        }
        Ok(())
    }
}

impl Drop for StageRecorder {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
