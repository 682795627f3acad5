//! Pixel containers, luma conversion, normalization, and image file I/O.
//!
//! Every image-like quantity in the crate (gray inputs, Y channels, saliency
//! maps, uniqueness maps) is a [`Plane`]: a row-major single-channel `f64`
//! buffer. Color inputs are held as an [`RgbImage`] of three planes in `[0,1]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// BT.601 luma weights shared by gray conversion and the metric Y channel.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format in {path}: {detail}")]
    Unsupported { path: PathBuf, detail: String },
    #[error("corrupt image file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("cannot write {path}: {detail}")]
    Write { path: PathBuf, detail: String },
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Single-channel floating-point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    /// Builds a plane, rejecting empty dimensions, length mismatches and non-finite samples.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidPlane(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(ImageError::InvalidPlane(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::InvalidPlane(format!("non-finite sample at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    /// Internal constructor for buffers already known to be valid.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        assert!(value.is_finite());
        Self::from_raw(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Samples `f(x, y)` at every pixel. Panics if `f` produces a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite sample at ({x}, {y})");
                data.push(v);
            }
        }
        Self::from_raw(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(v.is_finite());
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Pixelwise binary operation; panics on mismatched dimensions.
    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        assert_eq!(self.dims(), other.dims(), "zip_map on mismatched planes");
        Plane::from_raw(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn clamp01(&self) -> Plane {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn ensure_same_dims(&self, other: &Plane) -> Result<(), ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Copies the `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Plane {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Plane::from_raw(w, h, data)
    }
}

/// Three-channel color image with samples in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    r: Plane,
    g: Plane,
    b: Plane,
}

impl RgbImage {
    pub fn new(r: Plane, g: Plane, b: Plane) -> Result<Self, ImageError> {
        r.ensure_same_dims(&g)?;
        r.ensure_same_dims(&b)?;
        for p in [&r, &g, &b] {
            if p.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(ImageError::InvalidPlane("RGB samples must lie in [0,1]".into()));
            }
        }
        Ok(Self { r, g, b })
    }

    /// Replicates a gray plane into three channels (clamped to `[0,1]`).
    pub fn from_gray(p: &Plane) -> Self {
        let c = p.clamp01();
        Self { r: c.clone(), g: c.clone(), b: c }
    }

    pub fn width(&self) -> usize {
        self.r.width
    }

    pub fn height(&self) -> usize {
        self.r.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn channels(&self) -> [&Plane; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn channel(&self, c: Channel) -> Plane {
        match c {
            Channel::Luma => to_gray(self),
            Channel::Red => self.r.clone(),
            Channel::Green => self.g.clone(),
            Channel::Blue => self.b.clone(),
        }
    }
}

/// Which plane of a color image feeds a single-channel pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[default]
    Luma,
    Red,
    Green,
    Blue,
}

/// Applies a per-plane transform uniformly to gray and color images.
pub trait PlaneStack: Sized {
    fn planes(&self) -> Vec<&Plane>;
    fn try_map_planes<E>(&self, f: impl FnMut(&Plane) -> Result<Plane, E>) -> Result<Self, E>;
}

impl PlaneStack for Plane {
    fn planes(&self) -> Vec<&Plane> {
        vec![self]
    }

    fn try_map_planes<E>(&self, mut f: impl FnMut(&Plane) -> Result<Plane, E>) -> Result<Self, E> {
        f(self)
    }
}

impl PlaneStack for RgbImage {
    fn planes(&self) -> Vec<&Plane> {
        vec![&self.r, &self.g, &self.b]
    }

    fn try_map_planes<E>(&self, mut f: impl FnMut(&Plane) -> Result<Plane, E>) -> Result<Self, E> {
        Ok(RgbImage {
            r: f(&self.r)?.clamp01(),
            g: f(&self.g)?.clamp01(),
            b: f(&self.b)?.clamp01(),
        })
    }
}

/// BT.601 luma of a color image.
pub fn to_gray(img: &RgbImage) -> Plane {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .r
        .data
        .iter()
        .zip(&img.g.data)
        .zip(&img.b.data)
        .map(|((&r, &g), &b)| (wr * r + wg * g + wb * b).clamp(0.0, 1.0))
        .collect();
    Plane::from_raw(img.width(), img.height(), data)
}

/// Y channel used by the quality metrics; same luma as [`to_gray`].
pub fn to_y_channel(img: &RgbImage) -> Plane {
    to_gray(img)
}

/// Affine rescale to `[0,1]`. A constant plane maps to all zeros.
pub fn normalize_minmax(p: &Plane) -> Plane {
    let lo = p.min();
    let hi = p.max();
    let range = hi - lo;
    if range <= 0.0 || !range.is_finite() {
        return Plane::zeros(p.width, p.height);
    }
    p.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
}

fn classify_load_error(path: &Path, err: image::ImageError) -> ImageError {
    match err {
        image::ImageError::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            ImageError::Corrupt { path: path.to_path_buf(), detail: e.to_string() }
        }
        image::ImageError::IoError(e) => ImageError::Unreadable { path: path.to_path_buf(), source: e },
        image::ImageError::Unsupported(e) => {
            ImageError::Unsupported { path: path.to_path_buf(), detail: e.to_string() }
        }
        other => ImageError::Corrupt { path: path.to_path_buf(), detail: other.to_string() },
    }
}

/// Loads a PNG or binary PPM/PGM file, scaling integer samples to `[0,1]`.
///
/// Gray files are replicated into three channels; 16-bit files are rescaled
/// by 65535; alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage, ImageError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| ImageError::Unreadable { path: path.to_path_buf(), source })?;
    let reader = ImageReader::new(BufReader::new(file))
        .with_guessed_format()
        .map_err(|source| ImageError::Unreadable { path: path.to_path_buf(), source })?;
    if reader.format().is_none() {
        return Err(ImageError::Unsupported {
            path: path.to_path_buf(),
            detail: "unrecognized file signature".into(),
        });
    }
    let img = reader.decode().map_err(|e| classify_load_error(path, e))?;
    Ok(from_dynamic(&img))
}

fn from_dynamic(img: &DynamicImage) -> RgbImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let mut chans = [Vec::with_capacity(w * h), Vec::with_capacity(w * h), Vec::with_capacity(w * h)];
    if sixteen {
        for px in img.to_rgb16().pixels() {
            for (c, chan) in chans.iter_mut().enumerate() {
                chan.push(f64::from(px.0[c]) / 65535.0);
            }
        }
    } else {
        for px in img.to_rgb8().pixels() {
            for (c, chan) in chans.iter_mut().enumerate() {
                chan.push(f64::from(px.0[c]) / 255.0);
            }
        }
    }
    let [r, g, b] = chans;
    RgbImage {
        r: Plane::from_raw(w, h, r),
        g: Plane::from_raw(w, h, g),
        b: Plane::from_raw(w, h, b),
    }
}

/// How a plane is rendered to an 8-bit file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenderMode {
    #[default]
    Grayscale,
    /// Piecewise-linear blue → cyan → green → yellow → red ramp.
    Heatmap,
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Heatmap colormap: five evenly spaced anchors, linearly interpolated.
pub fn heatmap_color(v: f64) -> [u8; 3] {
    const ANCHORS: [[f64; 3]; 5] = [
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ];
    let t = v.clamp(0.0, 1.0) * 4.0;
    let i = (t.floor() as usize).min(3);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = quantize(ANCHORS[i][c] * (1.0 - f) + ANCHORS[i + 1][c] * f);
    }
    out
}

fn save_dynamic(img: DynamicImage, path: &Path) -> Result<(), ImageError> {
    let format = image::ImageFormat::from_path(path).map_err(|e| ImageError::Write {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    img.save_with_format(path, format)
        .map_err(|e| ImageError::Write { path: path.to_path_buf(), detail: e.to_string() })
}

/// Writes an 8-bit rendering of `p`; format follows the file extension.
pub fn save_plane(p: &Plane, path: impl AsRef<Path>, mode: RenderMode) -> Result<(), ImageError> {
    let path = path.as_ref();
    let (w, h) = (p.width as u32, p.height as u32);
    let img = match mode {
        RenderMode::Grayscale => {
            let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
                ImageBuffer::from_raw(w, h, p.data.iter().map(|&v| quantize(v)).collect())
                    .expect("buffer size matches dimensions");
            DynamicImage::ImageLuma8(buf)
        }
        RenderMode::Heatmap => {
            let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
                ImageBuffer::from_raw(w, h, p.data.iter().flat_map(|&v| heatmap_color(v)).collect())
                    .expect("buffer size matches dimensions");
            DynamicImage::ImageRgb8(buf)
        }
    };
    save_dynamic(img, path)
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let (w, h) = img.dims();
    let mut bytes = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        bytes.push(quantize(img.r.data[i]));
        bytes.push(quantize(img.g.data[i]));
        bytes.push(quantize(img.b.data[i]));
    }
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, bytes).expect("buffer size matches dimensions");
    save_dynamic(DynamicImage::ImageRgb8(buf), path.as_ref())
}

/// Magic bytes of the raw float map format.
pub const RAW_MAP_MAGIC: [u8; 4] = *b"SRMP";
pub const RAW_MAP_VERSION: u32 = 1;

/// Serializes a plane as a raw float map:
///
/// ```text
/// offset  size  field
/// 0       4     magic "SRMP"
/// 4       4     version (u32 LE, = 1)
/// 8       4     width   (u32 LE)
/// 12      4     height  (u32 LE)
/// 16      8·w·h samples, row-major f64 LE
/// ```
pub fn write_raw_map<W: Write>(p: &Plane, mut w: W) -> std::io::Result<()> {
    w.write_all(&RAW_MAP_MAGIC)?;
    w.write_all(&RAW_MAP_VERSION.to_le_bytes())?;
    w.write_all(&(p.width as u32).to_le_bytes())?;
    w.write_all(&(p.height as u32).to_le_bytes())?;
    for &v in &p.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_raw_map<R: Read>(mut r: R) -> Result<Plane, ImageError> {
    let corrupt = |detail: String| ImageError::Corrupt { path: PathBuf::from("<raw map>"), detail };
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|e| corrupt(format!("header: {e}")))?;
    if header[0..4] != RAW_MAP_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != RAW_MAP_VERSION {
        return Err(corrupt(format!("unsupported version {}", word(4))));
    }
    let (w, h) = (word(8) as usize, word(12) as usize);
    let mut bytes = vec![0u8; w * h * 8];
    r.read_exact(&mut bytes).map_err(|e| corrupt(format!("payload: {e}")))?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Plane::new(w, h, data)
}

pub fn save_raw_map(p: &Plane, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let file = File::create(path)
        .map_err(|e| ImageError::Write { path: path.to_path_buf(), detail: e.to_string() })?;
    write_raw_map(p, BufWriter::new(file))
        .map_err(|e| ImageError::Write { path: path.to_path_buf(), detail: e.to_string() })
}

pub fn load_raw_map(path: impl AsRef<Path>) -> Result<Plane, ImageError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| ImageError::Unreadable { path: path.to_path_buf(), source })?;
    read_raw_map(BufReader::new(file)).map_err(|e| match e {
        ImageError::Corrupt { detail, .. } => ImageError::Corrupt { path: path.to_path_buf(), detail },
        other => other,
    })
}
