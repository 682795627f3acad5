//! Local saliency maps.
//!
//! The pipeline fuses two feature maps, each turned into a uniqueness map:
//!
//! * the level-set curvature of the intensity surface, which responds to thin
//!   curved structures such as vessels;
//! * inverted windowed entropy, which responds to compact homogeneous regions.
//!
//! `I_sal = w1 · D_curv + (1 − w1) · D_compact`, every stage normalized to `[0,1]`.
//!
//! [`saliency_with_trace`] additionally records the intermediates needed to
//! pull a gradient on the saliency map back onto the source pixels, which the
//! saliency-aware training losses rely on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{self, convolve, derivatives, gaussian_kernel, Derivatives, FilterError};
use crate::imgcore::{normalize_minmax, Plane};

/// Gradient magnitudes squared below this produce zero curvature.
pub const CURVATURE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SaliencyError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("invalid saliency config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    /// Weight of the curvature uniqueness map in the fusion.
    pub w1: f64,
    pub entropy_window: usize,
    pub entropy_bins: usize,
    pub smooth_size: usize,
    pub smooth_sigma: f64,
    /// Side of the square neighbourhood summed by the uniqueness map; 0 sums
    /// over the whole image.
    pub uniqueness_window: usize,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            w1: 0.4,
            entropy_window: 7,
            entropy_bins: 8,
            smooth_size: 3,
            smooth_sigma: 0.5,
            uniqueness_window: 7,
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<(), SaliencyError> {
        let bad = |m: String| Err(SaliencyError::Config(m));
        if !(0.0..=1.0).contains(&self.w1) {
            return bad(format!("w1 must lie in [0,1], got {}", self.w1));
        }
        if self.entropy_window < 3 || self.entropy_window % 2 == 0 {
            return bad(format!("entropy window must be odd and >= 3, got {}", self.entropy_window));
        }
        if self.entropy_bins < 2 {
            return bad(format!("entropy bins must be >= 2, got {}", self.entropy_bins));
        }
        if self.smooth_size == 0 || self.smooth_size % 2 == 0 {
            return bad(format!("smoothing size must be odd, got {}", self.smooth_size));
        }
        if !(self.smooth_sigma > 0.0 && self.smooth_sigma.is_finite()) {
            return bad(format!("smoothing sigma must be positive, got {}", self.smooth_sigma));
        }
        if self.uniqueness_window != 0 && (self.uniqueness_window < 3 || self.uniqueness_window % 2 == 0)
        {
            return bad(format!(
                "uniqueness window must be 0 or odd and >= 3, got {}",
                self.uniqueness_window
            ));
        }
        Ok(())
    }
}

/// A plane whose samples all lie in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap(Plane);

impl SaliencyMap {
    /// Wraps a plane, rejecting samples outside `[0,1]`.
    pub fn new(p: Plane) -> Result<Self, SaliencyError> {
        if p.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(SaliencyError::Config("saliency values must lie in [0,1]".into()));
        }
        Ok(Self(p))
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }
}

impl AsRef<Plane> for SaliencyMap {
    fn as_ref(&self) -> &Plane {
        &self.0
    }
}

#[inline]
fn curvature_at(fx: f64, fy: f64, fxx: f64, fyy: f64, fxy: f64) -> f64 {
    let q = fx * fx + fy * fy;
    if q < CURVATURE_EPS {
        return 0.0;
    }
    (fxx * fy * fy + fyy * fx * fx - 2.0 * fxy * fx * fy) / q.powf(1.5)
}

fn curvature_from(d: &Derivatives) -> Plane {
    let (w, h) = d.fx.dims();
    Plane::from_fn(w, h, |x, y| {
        curvature_at(d.fx.get(x, y), d.fy.get(x, y), d.fxx.get(x, y), d.fyy.get(x, y), d.fxy.get(x, y))
    })
}

/// Signed level-set curvature of the intensity surface.
pub fn curvature_raw(p: &Plane) -> Result<Plane, SaliencyError> {
    Ok(curvature_from(&derivatives(p)?))
}

/// Curvature magnitude normalized to `[0,1]`.
pub fn curvature_map(p: &Plane) -> Result<Plane, SaliencyError> {
    Ok(normalize_minmax(&curvature_raw(p)?.map(f64::abs)))
}

/// Histogram bin of a sample; the top bin is closed on the right.
#[inline]
pub fn histogram_bin(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

/// Shannon entropy in bits of a histogram given by its counts; `0·log 0 = 0`.
pub fn histogram_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let prob = c as f64 / total;
            -prob * prob.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Windowed Shannon entropy in bits with replicated borders.
pub fn entropy_raw(p: &Plane, window: usize, bins: usize) -> Plane {
    let (w, h) = p.dims();
    let r = (window / 2) as isize;
    let binned: Vec<usize> = p.data().iter().map(|&v| histogram_bin(v, bins)).collect();
    let mut counts = vec![0usize; bins];
    Plane::from_fn(w, h, |x, y| {
        counts.iter_mut().for_each(|c| *c = 0);
        for dy in -r..=r {
            let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
            for dx in -r..=r {
                let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                counts[binned[sy * w + sx]] += 1;
            }
        }
        histogram_entropy(&counts)
    })
}

/// `1 − normalize(I_ent)`, then Gaussian-smoothed.
pub fn compactness_map(p: &Plane, cfg: &SaliencyConfig) -> Result<Plane, SaliencyError> {
    cfg.validate()?;
    let ent = normalize_minmax(&entropy_raw(p, cfg.entropy_window, cfg.entropy_bins));
    let inv = ent.map(|v| 1.0 - v);
    let k = gaussian_kernel(cfg.smooth_size, cfg.smooth_sigma)?;
    Ok(convolve(&inv, &k).clamp01())
}

/// Neighbour offsets `(dx, dy, exp(-‖offset‖))`, centre excluded.
fn window_offsets(window: usize) -> Vec<(isize, isize, f64)> {
    let r = (window / 2) as isize;
    let mut out = Vec::with_capacity(window * window - 1);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx == 0 && dy == 0 {
                continue;
            }
            out.push((dx, dy, (-(((dx * dx + dy * dy) as f64).sqrt())).exp()));
        }
    }
    out
}

/// Distance-weighted sum of absolute feature differences, before normalization.
///
/// `window == 0` sums over every other pixel of the image; otherwise the
/// square window is centred on each pixel with replicated borders.
pub fn uniqueness_raw(f: &Plane, window: usize) -> Plane {
    let (w, h) = f.dims();
    if window == 0 {
        return Plane::from_fn(w, h, |x, y| {
            let c = f.get(x, y);
            let mut acc = 0.0;
            for sy in 0..h {
                for sx in 0..w {
                    let dx = sx as f64 - x as f64;
                    let dy = sy as f64 - y as f64;
                    if dx == 0.0 && dy == 0.0 {
                        continue;
                    }
                    acc += (-(dx * dx + dy * dy).sqrt()).exp() * (c - f.get(sx, sy)).abs();
                }
            }
            acc
        });
    }
    let offsets = window_offsets(window);
    Plane::from_fn(w, h, |x, y| {
        let c = f.get(x, y);
        offsets
            .iter()
            .map(|&(dx, dy, wt)| wt * (c - f.get_clamped(x as isize + dx, y as isize + dy)).abs())
            .sum()
    })
}

/// Uniqueness map normalized to `[0,1]`.
pub fn uniqueness_map(f: &Plane, window: usize) -> Plane {
    normalize_minmax(&uniqueness_raw(f, window))
}

/// All intermediate maps of the pipeline, for inspection and rendering.
#[derive(Debug, Clone)]
pub struct SaliencyComponents {
    /// Normalized curvature magnitude.
    pub curvature: Plane,
    /// Smoothed `1 − I_ent`.
    pub compactness: Plane,
    pub d_curvature: Plane,
    pub d_compactness: Plane,
    pub saliency: SaliencyMap,
}

fn fuse(w1: f64, d_curv: &Plane, d_comp: &Plane) -> Plane {
    d_curv.zip_map(d_comp, |a, b| (w1 * a + (1.0 - w1) * b).clamp(0.0, 1.0))
}

pub fn saliency_components(gray: &Plane, cfg: &SaliencyConfig) -> Result<SaliencyComponents, SaliencyError> {
    cfg.validate()?;
    let curvature = curvature_map(gray)?;
    let compactness = compactness_map(gray, cfg)?;
    let d_curvature = uniqueness_map(&curvature, cfg.uniqueness_window);
    let d_compactness = uniqueness_map(&compactness, cfg.uniqueness_window);
    let saliency = SaliencyMap(fuse(cfg.w1, &d_curvature, &d_compactness));
    Ok(SaliencyComponents { curvature, compactness, d_curvature, d_compactness, saliency })
}

/// Fused local saliency map of a gray image in `[0,1]`.
pub fn saliency_map(gray: &Plane, cfg: &SaliencyConfig) -> Result<SaliencyMap, SaliencyError> {
    Ok(saliency_components(gray, cfg)?.saliency)
}

/// Records where min and max were taken so the normalization can be differentiated.
#[derive(Debug, Clone)]
struct NormTrace {
    argmin: usize,
    argmax: usize,
    range: f64,
    out: Plane,
}

fn normalize_traced(p: &Plane) -> NormTrace {
    let data = p.data();
    let (mut argmin, mut argmax) = (0, 0);
    for (i, &v) in data.iter().enumerate() {
        if v < data[argmin] {
            argmin = i;
        }
        if v > data[argmax] {
            argmax = i;
        }
    }
    let range = data[argmax] - data[argmin];
    NormTrace { argmin, argmax, range, out: normalize_minmax(p) }
}

impl NormTrace {
    fn vjp(&self, g: &Plane) -> Plane {
        let (w, h) = g.dims();
        if self.range <= 0.0 {
            return Plane::zeros(w, h);
        }
        let r = self.range;
        let mut out: Vec<f64> = g.data().iter().map(|&v| v / r).collect();
        // y_i = (x_i - m) / (M - m):  dy_i/dm = (y_i - 1)/R,  dy_i/dM = -y_i/R
        let (mut gm, mut g_max) = (0.0, 0.0);
        for (&gi, &yi) in g.data().iter().zip(self.out.data()) {
            gm += gi * (yi - 1.0);
            g_max -= gi * yi;
        }
        out[self.argmin] += gm / r;
        out[self.argmax] += g_max / r;
        Plane::from_raw(w, h, out)
    }
}

fn uniqueness_vjp(f: &Plane, window: usize, g: &Plane) -> Plane {
    let (w, h) = f.dims();
    let mut out = vec![0.0; w * h];
    if window == 0 {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let gv = g.data()[i];
                if gv == 0.0 {
                    continue;
                }
                let c = f.data()[i];
                for j in 0..w * h {
                    if j == i {
                        continue;
                    }
                    let dx = (j % w) as f64 - x as f64;
                    let dy = (j / w) as f64 - y as f64;
                    let s = gv * (-(dx * dx + dy * dy).sqrt()).exp() * sign(c - f.data()[j]);
                    out[i] += s;
                    out[j] -= s;
                }
            }
        }
        return Plane::from_raw(w, h, out);
    }
    let offsets = window_offsets(window);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let gv = g.data()[i];
            if gv == 0.0 {
                continue;
            }
            let c = f.data()[i];
            for &(dx, dy, wt) in &offsets {
                let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let j = sy * w + sx;
                let s = gv * wt * sign(c - f.data()[j]);
                out[i] += s;
                out[j] -= s;
            }
        }
    }
    Plane::from_raw(w, h, out)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Intermediates of one saliency evaluation.
///
/// Only the curvature branch depends differentiably on the pixels: the
/// entropy branch is built from histogram counts and is locally constant, so
/// its gradient is zero almost everywhere.
#[derive(Debug, Clone)]
pub struct SaliencyTrace {
    w1: f64,
    window: usize,
    derivs: Derivatives,
    raw_curv: Plane,
    curv_norm: NormTrace,
    uniq_norm: NormTrace,
}

/// Saliency map plus the trace needed for [`SaliencyTrace::vjp`].
pub fn saliency_with_trace(gray: &Plane, cfg: &SaliencyConfig) -> Result<(SaliencyMap, SaliencyTrace), SaliencyError> {
    cfg.validate()?;
    let derivs = derivatives(gray)?;
    let raw_curv = curvature_from(&derivs);
    let curv_norm = normalize_traced(&raw_curv.map(f64::abs));
    let uniq_norm = normalize_traced(&uniqueness_raw(&curv_norm.out, cfg.uniqueness_window));
    let compactness = compactness_map(gray, cfg)?;
    let d_comp = uniqueness_map(&compactness, cfg.uniqueness_window);
    let sal = SaliencyMap(fuse(cfg.w1, &uniq_norm.out, &d_comp));
    let trace = SaliencyTrace { w1: cfg.w1, window: cfg.uniqueness_window, derivs, raw_curv, curv_norm, uniq_norm };
    Ok((sal, trace))
}

impl SaliencyTrace {
    /// Pulls `∂L/∂I_sal` back to `∂L/∂gray`.
    pub fn vjp(&self, upstream: &Plane) -> Plane {
        let (w, h) = upstream.dims();
        if self.w1 == 0.0 {
            return Plane::zeros(w, h);
        }
        let g_dcurv = upstream.map(|v| v * self.w1);
        let g_uraw = self.uniq_norm.vjp(&g_dcurv);
        let g_curv = uniqueness_vjp(&self.curv_norm.out, self.window, &g_uraw);
        let g_abs = self.curv_norm.vjp(&g_curv);
        let g_raw = g_abs.zip_map(&self.raw_curv, |g, k| g * sign(k));

        let d = &self.derivs;
        let mut g = Derivatives {
            fx: Plane::zeros(w, h),
            fy: Plane::zeros(w, h),
            fxx: Plane::zeros(w, h),
            fyy: Plane::zeros(w, h),
            fxy: Plane::zeros(w, h),
        };
        for y in 0..h {
            for x in 0..w {
                let gk = g_raw.get(x, y);
                if gk == 0.0 {
                    continue;
                }
                let (fx, fy) = (d.fx.get(x, y), d.fy.get(x, y));
                let q = fx * fx + fy * fy;
                if q < CURVATURE_EPS {
                    continue;
                }
                let (fxx, fyy, fxy) = (d.fxx.get(x, y), d.fyy.get(x, y), d.fxy.get(x, y));
                let num = fxx * fy * fy + fyy * fx * fx - 2.0 * fxy * fx * fy;
                let q32 = q.powf(1.5);
                let q52 = q32 * q;
                g.fx.set(x, y, gk * ((2.0 * fyy * fx - 2.0 * fxy * fy) / q32 - 3.0 * num * fx / q52));
                g.fy.set(x, y, gk * ((2.0 * fxx * fy - 2.0 * fxy * fx) / q32 - 3.0 * num * fy / q52));
                g.fxx.set(x, y, gk * fy * fy / q32);
                g.fyy.set(x, y, gk * fx * fx / q32);
                g.fxy.set(x, y, gk * (-2.0 * fx * fy) / q32);
            }
        }
        filters::derivatives_adjoint(&g)
    }
}

/// Identifies the smooth piece of the saliency map containing `gray`.
///
/// The map is piecewise smooth: it has kinks where a curvature or a
/// uniqueness difference changes sign, where a normalization extremum moves,
/// or where the fusion clamps; it jumps where an entropy bin changes. Two
/// images with equal signatures lie on the same piece barring hash collisions.
pub fn saliency_branch_signature(gray: &Plane, cfg: &SaliencyConfig) -> Result<u64, SaliencyError> {
    use std::hash::{Hash, Hasher};
    cfg.validate()?;
    let mut h = std::collections::hash_map::DefaultHasher::new();
    let derivs = derivatives(gray)?;
    for (&fx, &fy) in derivs.fx.data().iter().zip(derivs.fy.data()) {
        (fx * fx + fy * fy < CURVATURE_EPS).hash(&mut h);
    }
    let raw_curv = curvature_from(&derivs);
    raw_curv.data().iter().map(|&k| sign(k) as i8).for_each(|v| v.hash(&mut h));
    let curv_norm = normalize_traced(&raw_curv.map(f64::abs));
    (curv_norm.argmin, curv_norm.argmax).hash(&mut h);
    let f = &curv_norm.out;
    let (w, ht) = f.dims();
    if cfg.uniqueness_window == 0 {
        for &a in f.data() {
            f.data().iter().map(|&b| sign(a - b) as i8).for_each(|v| v.hash(&mut h));
        }
    } else {
        let offsets = window_offsets(cfg.uniqueness_window);
        for y in 0..ht {
            for x in 0..w {
                let c = f.get(x, y);
                for &(dx, dy, _) in &offsets {
                    (sign(c - f.get_clamped(x as isize + dx, y as isize + dy)) as i8).hash(&mut h);
                }
            }
        }
    }
    let uniq_norm = normalize_traced(&uniqueness_raw(f, cfg.uniqueness_window));
    (uniq_norm.argmin, uniq_norm.argmax).hash(&mut h);
    gray.data().iter().map(|&v| histogram_bin(v, cfg.entropy_bins)).for_each(|b| b.hash(&mut h));
    let d_comp = uniqueness_map(&compactness_map(gray, cfg)?, cfg.uniqueness_window);
    for (&u, &d) in uniq_norm.out.data().iter().zip(d_comp.data()) {
        let v = cfg.w1 * u + (1.0 - cfg.w1) * d;
        ((v > 1.0) as u8 + 2 * (v < 0.0) as u8).hash(&mut h);
    }
    Ok(h.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SaliencyConfig::default().validate().is_ok());
        for bad in [
            SaliencyConfig { w1: 1.5, ..Default::default() },
            SaliencyConfig { entropy_window: 4, ..Default::default() },
            SaliencyConfig { entropy_bins: 1, ..Default::default() },
            SaliencyConfig { smooth_sigma: 0.0, ..Default::default() },
            SaliencyConfig { uniqueness_window: 2, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(SaliencyConfig { uniqueness_window: 0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn defaults_match_published_constants() {
        let c = SaliencyConfig::default();
        assert_eq!((c.w1, c.entropy_window, c.entropy_bins, c.smooth_size, c.smooth_sigma), (0.4, 7, 8, 3, 0.5));
    }

    #[test]
    fn curvature_of_constant_and_ramp() {
        let c = curvature_map(&Plane::filled(9, 9, 0.3)).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
        let ramp = curvature_raw(&Plane::from_fn(9, 9, |x, _| x as f64 / 9.0)).unwrap();
        for y in 1..8 {
            for x in 1..8 {
                assert_eq!(ramp.get(x, y), 0.0);
            }
        }
    }

    #[test]
    fn paraboloid_curvature_is_inverse_radius() {
        let p = Plane::from_fn(41, 41, |x, y| {
            let (u, v) = (x as f64 - 20.0, y as f64 - 20.0);
            u * u + v * v
        });
        let k = curvature_raw(&p).unwrap();
        for (x, y) in [(23, 20), (20, 30), (28, 26), (35, 20)] {
            let r = ((x as f64 - 20.0).powi(2) + (y as f64 - 20.0).powi(2)).sqrt();
            assert!((k.get(x, y) * r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(histogram_bin(0.0, 8), 0);
        assert_eq!(histogram_bin(0.124, 8), 0);
        assert_eq!(histogram_bin(0.125, 8), 1);
        assert_eq!(histogram_bin(1.0, 8), 7);
    }

    #[test]
    fn entropy_of_two_equal_masses_is_one_bit() {
        let mut counts = [0usize; 8];
        counts[0] = 24;
        counts[7] = 24;
        assert_eq!(histogram_entropy(&counts), 1.0);
        assert_eq!(histogram_entropy(&[49, 0, 0]), 0.0);
    }

    #[test]
    fn windowed_entropy_of_checkerboard() {
        // Every 3x3 window of a checkerboard splits 5/4 between two bins.
        let p = Plane::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 1.0 });
        let e = entropy_raw(&p, 3, 8);
        let expect = -(5.0 / 9.0f64) * (5.0 / 9.0f64).log2() - (4.0 / 9.0f64) * (4.0 / 9.0f64).log2();
        assert!((e.get(3, 3) - expect).abs() < 1e-12);
    }

    #[test]
    fn compactness_of_constant_is_one() {
        let c = compactness_map(&Plane::filled(12, 12, 0.6), &SaliencyConfig::default()).unwrap();
        assert!(c.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn uniqueness_single_bright_pixel() {
        let mut p = Plane::zeros(5, 5);
        p.set(2, 2, 1.0);
        let raw = uniqueness_raw(&p, 3);
        let expect = 4.0 * (-1.0f64).exp() + 4.0 * (-(2.0f64).sqrt()).exp();
        assert!((raw.get(2, 2) - expect).abs() < 1e-12);
        assert!((expect - 2.4440).abs() < 1e-4);
        let n = uniqueness_map(&p, 3);
        assert_eq!(n.get(2, 2), 1.0);
    }

    #[test]
    fn uniqueness_full_image_mode() {
        let mut p = Plane::zeros(4, 3);
        p.set(1, 1, 1.0);
        let raw = uniqueness_raw(&p, 0);
        let mut expect = 0.0;
        for y in 0..3 {
            for x in 0..4 {
                if (x, y) != (1, 1) {
                    let d = ((x as f64 - 1.0).powi(2) + (y as f64 - 1.0).powi(2)).sqrt();
                    expect += (-d).exp();
                }
            }
        }
        assert!((raw.get(1, 1) - expect).abs() < 1e-12);
        assert!((raw.get(3, 2) - (-(5.0f64).sqrt()).exp()).abs() < 1e-12);
    }

    #[test]
    fn constant_image_has_zero_saliency() {
        let s = saliency_map(&Plane::filled(16, 16, 0.42), &SaliencyConfig::default()).unwrap();
        assert!(s.plane().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_matches_plain_pipeline() {
        let p = Plane::from_fn(14, 12, |x, y| (((x * 31 + y * 17) % 23) as f64 / 23.0).powf(1.3));
        let cfg = SaliencyConfig::default();
        let (s, _) = saliency_with_trace(&p, &cfg).unwrap();
        assert_eq!(s, saliency_map(&p, &cfg).unwrap());
    }

    #[test]
    fn trace_is_zero_without_curvature_weight() {
        let p = Plane::from_fn(10, 10, |x, y| ((x * 3 + y * 5) % 7) as f64 / 7.0);
        let cfg = SaliencyConfig { w1: 0.0, ..Default::default() };
        let (_, t) = saliency_with_trace(&p, &cfg).unwrap();
        let g = t.vjp(&Plane::filled(10, 10, 1.0));
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
