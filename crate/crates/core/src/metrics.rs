//! Full-reference quality metrics on the Y channel: RMSE, PSNR, SSIM, and a
//! simplified spectral/spatial sharpness score.

use serde::ser::Serializer;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::degrade::ScaleFactor;
use crate::filters::gaussian_taps;
use crate::imgcore::{to_y_channel, ImageError, Plane, RgbImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Side of the blocks scored by [`s3_sharpness`].
pub const S3_BLOCK: usize = 8;
/// Minimum image side accepted by [`s3_sharpness`].
pub const S3_MIN_SIDE: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image of {0}x{1} is smaller than the required {2}x{2}")]
    TooSmall(usize, usize, usize),
}

fn check_dims(a: &Plane, b: &Plane) -> Result<(), MetricsError> {
    a.ensure_same_dims(b).map_err(|e| match e {
        ImageError::DimensionMismatch(w0, h0, w1, h1) => MetricsError::DimensionMismatch(w0, h0, w1, h1),
        _ => unreachable!("ensure_same_dims only reports mismatches"),
    })
}

pub fn mse(a: &Plane, b: &Plane) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

pub fn rmse(a: &Plane, b: &Plane) -> Result<f64, MetricsError> {
    Ok(mse(a, b)?.sqrt())
}

/// PSNR in dB for unit dynamic range; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Plane, b: &Plane) -> Result<f64, MetricsError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Separable 11×11 Gaussian (σ = 1.5) filter evaluated at window-valid positions.
fn filter_valid(p: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM over all positions where the 11×11 window fits inside the image.
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(w, h, SSIM_WINDOW));
    }
    if a == b {
        return Ok(1.0);
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA).expect("fixed window is valid");
    let (ad, bd) = (a.data(), b.data());
    let aa: Vec<f64> = ad.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = bd.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = ad.iter().zip(bd).map(|(x, y)| x * y).collect();
    let (mu_a, _, _) = filter_valid(ad, w, h, &taps);
    let (mu_b, _, _) = filter_valid(bd, w, h, &taps);
    let (e_aa, _, _) = filter_valid(&aa, w, h, &taps);
    let (e_bb, _, _) = filter_valid(&bb, w, h, &taps);
    let (e_ab, ow, oh) = filter_valid(&ab, w, h, &taps);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / (ow * oh) as f64)
}

/// Radially averaged 8×8 DFT magnitude at integer radii 1..=4.
fn radial_spectrum(block: &[f64; S3_BLOCK * S3_BLOCK]) -> [f64; 4] {
    use std::f64::consts::PI;
    const N: usize = S3_BLOCK;
    let mean = block.iter().sum::<f64>() / (N * N) as f64;
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for v in 0..N {
        for u in 0..N {
            let fu = if u > N / 2 { u as isize - N as isize } else { u as isize };
            let fv = if v > N / 2 { v as isize - N as isize } else { v as isize };
            let radius = (((fu * fu + fv * fv) as f64).sqrt()).round() as usize;
            if radius == 0 || radius > 4 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..N {
                for x in 0..N {
                    let ang = -2.0 * PI * ((u * x + v * y) as f64) / N as f64;
                    let s = block[y * N + x] - mean;
                    re += s * ang.cos();
                    im += s * ang.sin();
                }
            }
            sums[radius - 1] += (re * re + im * im).sqrt();
            counts[radius - 1] += 1;
        }
    }
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = sums[i] / counts[i] as f64;
    }
    out
}

/// Spectral sharpness of a block: the magnitude spectrum falls off as
/// `f^-α`; steep falloff (large α) means blur. Mapped through
/// `1 − 1/(1 + exp(−3(α − 2)))`.
fn spectral_score(block: &[f64; S3_BLOCK * S3_BLOCK]) -> f64 {
    let spec = radial_spectrum(block);
    let pts: Vec<(f64, f64)> = spec
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 1e-12)
        .map(|(i, &m)| (((i + 1) as f64).ln(), m.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let alpha = -sxy / sxx;
    1.0 - 1.0 / (1.0 + (-3.0 * (alpha - 2.0)).exp())
}

/// Spatial sharpness of a block: the largest total variation of any 2×2
/// neighbourhood, divided by its maximum possible value 4.
fn spatial_score(block: &[f64; S3_BLOCK * S3_BLOCK]) -> f64 {
    const N: usize = S3_BLOCK;
    let mut best: f64 = 0.0;
    for y in 0..N - 1 {
        for x in 0..N - 1 {
            let q = [block[y * N + x], block[y * N + x + 1], block[(y + 1) * N + x], block[(y + 1) * N + x + 1]];
            let mut tv = 0.0;
            for i in 0..4 {
                for j in i + 1..4 {
                    tv += (q[i] - q[j]).abs();
                }
            }
            best = best.max(tv);
        }
    }
    (best / 4.0).clamp(0.0, 1.0)
}

/// Simplified S3 sharpness in `[0,1]`.
///
/// Non-overlapping 8×8 blocks are scored by the geometric mean of a
/// spectral-slope score and a local total-variation score; the image score is
/// the mean of the top 1% of block scores (at least one block).
pub fn s3_sharpness(a: &Plane) -> Result<f64, MetricsError> {
    let (w, h) = a.dims();
    if w < S3_MIN_SIDE || h < S3_MIN_SIDE {
        return Err(MetricsError::TooSmall(w, h, S3_MIN_SIDE));
    }
    let mut scores = Vec::new();
    let mut block = [0.0; S3_BLOCK * S3_BLOCK];
    for by in 0..h / S3_BLOCK {
        for bx in 0..w / S3_BLOCK {
            for y in 0..S3_BLOCK {
                for x in 0..S3_BLOCK {
                    block[y * S3_BLOCK + x] = a.get(bx * S3_BLOCK + x, by * S3_BLOCK + y).clamp(0.0, 1.0);
                }
            }
            let spatial = spatial_score(&block);
            let score = if spatial == 0.0 { 0.0 } else { (spectral_score(&block) * spatial).sqrt() };
            scores.push(score);
        }
    }
    scores.sort_by(|x, y| y.total_cmp(x));
    let top = (scores.len() / 100).max(1);
    Ok(scores[..top].iter().sum::<f64>() / top as f64)
}

fn serialize_psnr<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn deserialize_psnr<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid psnr value {t:?}"))),
    }
}

/// All four metrics for one HR/SR pair. Infinite PSNR serializes as `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ssim: f64,
    pub rmse: f64,
    #[serde(serialize_with = "serialize_psnr", deserialize_with = "deserialize_psnr")]
    pub psnr_db: f64,
    pub s3: f64,
    pub scale: ScaleFactor,
}

impl MetricsReport {
    pub fn psnr_is_infinite(&self) -> bool {
        self.psnr_db.is_infinite()
    }

    pub fn psnr_text(&self) -> String {
        if self.psnr_is_infinite() {
            "inf".into()
        } else {
            format!("{}", self.psnr_db)
        }
    }
}

/// Metrics of two planes already on the Y channel. The S3 entry scores the
/// SR plane.
pub fn evaluate_planes(hr: &Plane, sr: &Plane, r: ScaleFactor) -> Result<MetricsReport, MetricsError> {
    check_dims(hr, sr)?;
    Ok(MetricsReport {
        ssim: ssim(hr, sr)?,
        rmse: rmse(hr, sr)?,
        psnr_db: psnr(hr, sr)?,
        s3: s3_sharpness(sr)?,
        scale: r,
    })
}

/// Converts both images to the Y channel and computes every metric.
pub fn evaluate_pair(hr: &RgbImage, sr: &RgbImage, r: ScaleFactor) -> Result<MetricsReport, MetricsError> {
    evaluate_planes(&to_y_channel(hr), &to_y_channel(sr), r)
}
