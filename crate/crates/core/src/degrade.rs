//! HR → LR degradation and the bicubic upscaling baseline.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{convolve, gaussian_kernel};
use crate::imgcore::{Plane, PlaneStack};

#[derive(Debug, Error, PartialEq)]
pub enum DegradeError {
    #[error("scale factor must be one of 2, 4, 8, 16; got {0}")]
    BadScale(u32),
    #[error("image of {width}x{height} is not divisible by scale {scale}")]
    NotDivisible { width: usize, height: usize, scale: u32 },
}

/// Power-of-two magnification in `{2, 4, 8, 16}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ScaleFactor(u32);

impl ScaleFactor {
    pub const X2: ScaleFactor = ScaleFactor(2);
    pub const X4: ScaleFactor = ScaleFactor(4);
    pub const X8: ScaleFactor = ScaleFactor(8);
    pub const X16: ScaleFactor = ScaleFactor(16);

    pub fn new(r: u32) -> Result<Self, DegradeError> {
        match r {
            2 | 4 | 8 | 16 => Ok(Self(r)),
            _ => Err(DegradeError::BadScale(r)),
        }
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Number of cascaded ×2 stages needed to reach this factor.
    pub fn stages(self) -> usize {
        self.0.trailing_zeros() as usize
    }
}

impl TryFrom<u32> for ScaleFactor {
    type Error = DegradeError;
    fn try_from(r: u32) -> Result<Self, Self::Error> {
        Self::new(r)
    }
}

impl From<ScaleFactor> for u32 {
    fn from(s: ScaleFactor) -> u32 {
        s.0
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parameters that fully determine an HR → LR mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeParams {
    pub scale: u32,
    pub sigma: f64,
    pub kernel_size: usize,
    /// Phase of the decimation grid: LR pixel `k` samples HR pixel `offset + k·r`.
    pub offset: usize,
}

impl DegradeParams {
    /// `σ = r/2`, kernel size `2·⌈2σ⌉ + 1`, decimation phase 0.
    pub fn for_scale(r: ScaleFactor) -> Self {
        let sigma = f64::from(r.get()) / 2.0;
        let kernel_size = 2 * (2.0 * sigma).ceil() as usize + 1;
        Self { scale: r.get(), sigma, kernel_size, offset: 0 }
    }
}

fn make_lr_plane(hr: &Plane, r: ScaleFactor) -> Result<Plane, DegradeError> {
    let (w, h) = hr.dims();
    let s = r.as_usize();
    if w % s != 0 || h % s != 0 {
        return Err(DegradeError::NotDivisible { width: w, height: h, scale: r.get() });
    }
    let params = DegradeParams::for_scale(r);
    let k = gaussian_kernel(params.kernel_size, params.sigma).expect("derived kernel is valid");
    let blurred = convolve(hr, &k);
    // The blur is a convex combination of samples, so the result stays in [min, max] of hr.
    let (lo, hi) = (hr.min(), hr.max());
    Ok(Plane::from_fn(w / s, h / s, |x, y| {
        blurred.get(params.offset + x * s, params.offset + y * s).clamp(lo, hi)
    }))
}

/// Gaussian blur with `σ = r/2` followed by decimation by `r` at phase 0.
pub fn make_lr<I: PlaneStack>(hr: &I, r: ScaleFactor) -> Result<I, DegradeError> {
    hr.try_map_planes(|p| make_lr_plane(p, r))
}

/// Catmull-Rom weight (`a = −0.5`) for a tap at distance `t`.
#[inline]
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Interpolation taps for output coordinate `i` at scale `s`: the source
/// position is `i / s`, aligned with phase-0 decimation.
fn taps_for(i: usize, s: usize) -> (isize, [f64; 4]) {
    let pos = i as f64 / s as f64;
    let base = pos.floor();
    let frac = pos - base;
    let w = [
        cubic_weight(1.0 + frac),
        cubic_weight(frac),
        cubic_weight(1.0 - frac),
        cubic_weight(2.0 - frac),
    ];
    (base as isize - 1, w)
}

fn bicubic_plane(lr: &Plane, s: usize) -> Plane {
    let (w, h) = lr.dims();
    let xt: Vec<_> = (0..w * s).map(|x| taps_for(x, s)).collect();
    let yt: Vec<_> = (0..h * s).map(|y| taps_for(y, s)).collect();
    Plane::from_fn(w * s, h * s, |x, y| {
        let (x0, wx) = xt[x];
        let (y0, wy) = yt[y];
        let mut acc = 0.0;
        for (j, &wyj) in wy.iter().enumerate() {
            let mut row = 0.0;
            for (i, &wxi) in wx.iter().enumerate() {
                row += wxi * lr.get_clamped(x0 + i as isize, y0 + j as isize);
            }
            acc += wyj * row;
        }
        acc.clamp(0.0, 1.0)
    })
}

/// Catmull-Rom bicubic upscaling by `r`, clamped to `[0,1]`.
pub fn bicubic_upscale<I: PlaneStack>(lr: &I, r: ScaleFactor) -> I {
    lr.try_map_planes::<std::convert::Infallible>(|p| Ok(bicubic_plane(p, r.as_usize())))
        .unwrap_or_else(|e| match e {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::gaussian_taps;

    #[test]
    fn scale_factor_domain() {
        for r in [2, 4, 8, 16] {
            assert_eq!(ScaleFactor::new(r).unwrap().get(), r);
        }
        for r in [0, 1, 3, 6, 32] {
            assert_eq!(ScaleFactor::new(r), Err(DegradeError::BadScale(r)));
        }
        assert_eq!(ScaleFactor::X8.stages(), 3);
        let s: ScaleFactor = serde_json::from_str("4").unwrap();
        assert_eq!(s, ScaleFactor::X4);
        assert!(serde_json::from_str::<ScaleFactor>("3").is_err());
    }

    #[test]
    fn params_follow_scale() {
        let p = DegradeParams::for_scale(ScaleFactor::X4);
        assert_eq!((p.sigma, p.kernel_size, p.offset), (2.0, 9, 0));
        let p = DegradeParams::for_scale(ScaleFactor::X2);
        assert_eq!((p.sigma, p.kernel_size), (1.0, 5));
    }

    #[test]
    fn shape_and_divisibility() {
        let hr = Plane::from_fn(64, 64, |x, y| ((x + y) % 5) as f64 / 5.0);
        let lr = make_lr(&hr, ScaleFactor::X4).unwrap();
        assert_eq!(lr.dims(), (16, 16));
        assert_eq!(
            make_lr(&Plane::zeros(30, 32), ScaleFactor::X4).unwrap_err(),
            DegradeError::NotDivisible { width: 30, height: 32, scale: 4 }
        );
    }

    #[test]
    fn constant_survives() {
        for r in [ScaleFactor::X2, ScaleFactor::X8] {
            let lr = make_lr(&Plane::filled(32, 32, 0.3), r).unwrap();
            assert!(lr.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_matches_sigma_one_kernel() {
        let mut hr = Plane::zeros(16, 16);
        hr.set(8, 8, 1.0);
        let lr = make_lr(&hr, ScaleFactor::X2).unwrap();
        // Direct evaluation of the normalized 5-tap sigma=1 Gaussian at even offsets.
        let taps = gaussian_taps(5, 1.0).unwrap();
        for (ly, dy) in [(3usize, -2isize), (4, 0), (5, 2)] {
            for (lx, dx) in [(3usize, -2isize), (4, 0), (5, 2)] {
                let expect = taps[(dx + 2) as usize] * taps[(dy + 2) as usize];
                assert!((lr.get(lx, ly) - expect).abs() < 1e-15);
            }
        }
        assert_eq!(lr.get(0, 0), 0.0);
    }

    #[test]
    fn bicubic_passes_through_knots() {
        let lr = Plane::from_fn(8, 6, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let up = bicubic_upscale(&lr, ScaleFactor::X2);
        assert_eq!(up.dims(), (16, 12));
        for y in 0..6 {
            for x in 0..8 {
                assert!((up.get(2 * x, 2 * y) - lr.get(x, y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bicubic_constant_and_ramp() {
        let up = bicubic_upscale(&Plane::filled(5, 5, 0.6), ScaleFactor::X4);
        assert!(up.data().iter().all(|v| (v - 0.6).abs() < 1e-12));

        let lr = Plane::from_fn(10, 10, |x, y| 0.05 * x as f64 + 0.03 * y as f64);
        let up = bicubic_upscale(&lr, ScaleFactor::X2);
        for y in 4..16 {
            for x in 4..16 {
                let expect = 0.05 * x as f64 / 2.0 + 0.03 * y as f64 / 2.0;
                assert!((up.get(x, y) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn catmull_rom_partition_of_unity() {
        for i in 0..8 {
            let (_, w) = taps_for(i, 8);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
