//! Gaussian filtering and finite-difference derivatives.
//!
//! All filtering replicates edge pixels at the border.

use thiserror::Error;

use crate::imgcore::Plane;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("kernel size must be odd and at least 1, got {0}")]
    BadKernelSize(usize),
    #[error("gaussian sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("kernel weights length {len} does not match size {size}x{size}")]
    BadWeights { size: usize, len: usize },
    #[error("plane of {0}x{1} is too small, need at least {2}x{2}")]
    TooSmall(usize, usize, usize),
}

/// Square convolution kernel, optionally with a separable factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
    separable: Option<Vec<f64>>,
}

impl Kernel {
    /// Dense kernel from row-major `size`×`size` weights.
    pub fn dense(size: usize, weights: Vec<f64>) -> Result<Self, FilterError> {
        if size == 0 || size % 2 == 0 {
            return Err(FilterError::BadKernelSize(size));
        }
        if weights.len() != size * size {
            return Err(FilterError::BadWeights { size, len: weights.len() });
        }
        Ok(Self { size, weights, separable: None })
    }

    /// Outer product `taps ⊗ taps`; convolution runs as two 1D passes.
    pub fn separable(taps: Vec<f64>) -> Result<Self, FilterError> {
        let size = taps.len();
        if size == 0 || size % 2 == 0 {
            return Err(FilterError::BadKernelSize(size));
        }
        let mut weights = Vec::with_capacity(size * size);
        for &a in &taps {
            for &b in &taps {
                weights.push(a * b);
            }
        }
        Ok(Self { size, weights, separable: Some(taps) })
    }

    pub fn identity() -> Self {
        Self::separable(vec![1.0]).expect("size 1 is valid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    /// Row-major dense weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn taps(&self) -> Option<&[f64]> {
        self.separable.as_deref()
    }

    /// Weight at offset `(dx, dy)` from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) as usize) * self.size + (dx + r) as usize]
    }

    /// Same weights without the separable factorization.
    pub fn to_dense(&self) -> Kernel {
        Kernel { size: self.size, weights: self.weights.clone(), separable: None }
    }
}

/// Normalized 1D Gaussian taps `exp(-x²/2σ²)` for `x` in `-size/2..=size/2`.
pub fn gaussian_taps(size: usize, sigma: f64) -> Result<Vec<f64>, FilterError> {
    if size == 0 || size % 2 == 0 {
        return Err(FilterError::BadKernelSize(size));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FilterError::BadSigma(sigma));
    }
    let r = (size / 2) as isize;
    let mut taps: Vec<f64> =
        (-r..=r).map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Sampled 2D Gaussian normalized to unit sum. Built separably: the 2D
/// samples factor as a product of the 1D ones.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel, FilterError> {
    Kernel::separable(gaussian_taps(size, sigma)?)
}

/// Convolution with edge replication; uses the separable path when available.
pub fn convolve(p: &Plane, k: &Kernel) -> Plane {
    match &k.separable {
        Some(taps) => {
            let tmp = convolve_rows(p, taps);
            convolve_cols(&tmp, taps)
        }
        None => convolve_dense(p, k),
    }
}

/// Direct 2D convolution over the full `size`×`size` support.
pub fn convolve_dense(p: &Plane, k: &Kernel) -> Plane {
    let r = k.radius() as isize;
    Plane::from_fn(p.width(), p.height(), |x, y| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                // Symmetric kernels make correlation and convolution coincide;
                // flip anyway so asymmetric dense kernels convolve properly.
                acc += k.at(-dx, -dy) * p.get_clamped(x as isize + dx, y as isize + dy);
            }
        }
        acc
    })
}

pub(crate) fn convolve_rows(p: &Plane, taps: &[f64]) -> Plane {
    let r = (taps.len() / 2) as isize;
    Plane::from_fn(p.width(), p.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, &t)| t * p.get_clamped(x as isize + r - i as isize, y as isize))
            .sum()
    })
}

pub(crate) fn convolve_cols(p: &Plane, taps: &[f64]) -> Plane {
    let r = (taps.len() / 2) as isize;
    Plane::from_fn(p.width(), p.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, &t)| t * p.get_clamped(x as isize, y as isize + r - i as isize))
            .sum()
    })
}

/// First and second partial derivatives of a plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub fx: Plane,
    pub fy: Plane,
    pub fxx: Plane,
    pub fyy: Plane,
    pub fxy: Plane,
}

/// Central differences at unit spacing with replicated borders.
///
/// `fxy` is the central difference in `y` of `fx`.
pub fn derivatives(p: &Plane) -> Result<Derivatives, FilterError> {
    let (w, h) = p.dims();
    if w < 3 || h < 3 {
        return Err(FilterError::TooSmall(w, h, 3));
    }
    let at = |x: usize, y: usize, dx: isize, dy: isize| p.get_clamped(x as isize + dx, y as isize + dy);
    let fx = Plane::from_fn(w, h, |x, y| (at(x, y, 1, 0) - at(x, y, -1, 0)) / 2.0);
    let fy = Plane::from_fn(w, h, |x, y| (at(x, y, 0, 1) - at(x, y, 0, -1)) / 2.0);
    let fxx = Plane::from_fn(w, h, |x, y| at(x, y, 1, 0) - 2.0 * p.get(x, y) + at(x, y, -1, 0));
    let fyy = Plane::from_fn(w, h, |x, y| at(x, y, 0, 1) - 2.0 * p.get(x, y) + at(x, y, 0, -1));
    let fxy = Plane::from_fn(w, h, |x, y| {
        (fx.get_clamped(x as isize, y as isize + 1) - fx.get_clamped(x as isize, y as isize - 1)) / 2.0
    });
    Ok(Derivatives { fx, fy, fxx, fyy, fxy })
}

/// Adjoint of [`derivatives`]: maps upstream gradients on the five
/// derivative planes back onto the source plane.
pub(crate) fn derivatives_adjoint(g: &Derivatives) -> Plane {
    let (w, h) = g.fx.dims();
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let clamp_y = |y: isize| y.clamp(0, h as isize - 1) as usize;

    // fxy = Dy(fx): push its gradient into an accumulated fx gradient first.
    let mut gfx = g.fx.clone().into_data();
    for y in 0..h {
        for x in 0..w {
            let v = g.fxy.get(x, y) / 2.0;
            gfx[clamp_y(y as isize + 1) * w + x] += v;
            gfx[clamp_y(y as isize - 1) * w + x] -= v;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let xp = y * w + clamp_x(x as isize + 1);
            let xm = y * w + clamp_x(x as isize - 1);
            let yp = clamp_y(y as isize + 1) * w + x;
            let ym = clamp_y(y as isize - 1) * w + x;

            let a = gfx[i] / 2.0;
            out[xp] += a;
            out[xm] -= a;

            let b = g.fy.get(x, y) / 2.0;
            out[yp] += b;
            out[ym] -= b;

            let c = g.fxx.get(x, y);
            out[xp] += c;
            out[xm] += c;
            out[i] -= 2.0 * c;

            let d = g.fyy.get(x, y);
            out[yp] += d;
            out[ym] += d;
            out[i] -= 2.0 * d;
        }
    }
    Plane::from_raw(w, h, out)
}
