//! Layer kinds, their forward passes, and their exact reverse-mode gradients.

use serde::{Deserialize, Serialize};

use super::tensor::{matmul, Scalar, Shape4, Tensor4};
use super::NnError;

/// Default negative slope of leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Architecture description of one layer, without parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    #[serde(rename = "batchnorm")]
    BatchNorm { channels: usize },
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    /// Fully connected layer on the flattened `c·h·w` features; output `(n, out, 1, 1)`.
    Dense { in_features: usize, out_features: usize },
    PixelShuffle { factor: usize },
    /// conv → BN → ReLU → conv → BN, added to the block input.
    ResidualBlock { channels: usize, kernel: usize },
    /// Elementwise addition of the input and the output of `body`.
    ElementwiseAdd { body: Vec<LayerSpec> },
}

impl LayerSpec {
    /// 3×3 "same" convolution at the given stride.
    pub fn conv3(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        LayerSpec::Conv { in_channels, out_channels, kernel: 3, stride, padding: 1 }
    }

    pub fn leaky() -> Self {
        LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        match self {
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, .. } => {
                if *in_channels == 0 || *out_channels == 0 || *kernel == 0 || *stride == 0 {
                    return Err(format!("degenerate conv {self:?}"));
                }
            }
            LayerSpec::BatchNorm { channels } if *channels == 0 => return Err("batchnorm with 0 channels".into()),
            LayerSpec::LeakyRelu { slope } if !slope.is_finite() => return Err("non-finite leaky slope".into()),
            LayerSpec::Dense { in_features, out_features } if *in_features == 0 || *out_features == 0 => {
                return Err(format!("degenerate dense {self:?}"));
            }
            LayerSpec::PixelShuffle { factor } if *factor < 2 => {
                return Err(format!("pixel shuffle factor must be >= 2, got {factor}"));
            }
            LayerSpec::ResidualBlock { channels, kernel } if *channels == 0 || kernel % 2 == 0 => {
                return Err(format!("residual block needs channels > 0 and an odd kernel: {self:?}"));
            }
            LayerSpec::ElementwiseAdd { body } => {
                for l in body {
                    l.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, s: Shape4) -> Result<Shape4, String> {
        match self {
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding } => {
                if s.c != *in_channels {
                    return Err(format!("conv expects {in_channels} channels, got {}", s.c));
                }
                if s.h + 2 * padding < *kernel || s.w + 2 * padding < *kernel {
                    return Err(format!("input {s} smaller than kernel {kernel}"));
                }
                Ok(Shape4::new(
                    s.n,
                    *out_channels,
                    (s.h + 2 * padding - kernel) / stride + 1,
                    (s.w + 2 * padding - kernel) / stride + 1,
                ))
            }
            LayerSpec::BatchNorm { channels } => {
                if s.c != *channels {
                    return Err(format!("batchnorm expects {channels} channels, got {}", s.c));
                }
                Ok(s)
            }
            LayerSpec::Relu | LayerSpec::LeakyRelu { .. } | LayerSpec::Sigmoid => Ok(s),
            LayerSpec::Dense { in_features, out_features } => {
                if s.item_len() != *in_features {
                    return Err(format!("dense expects {in_features} features, got {}", s.item_len()));
                }
                Ok(Shape4::new(s.n, *out_features, 1, 1))
            }
            LayerSpec::PixelShuffle { factor } => {
                let f2 = factor * factor;
                if s.c % f2 != 0 {
                    return Err(format!("pixel shuffle needs channels divisible by {f2}, got {}", s.c));
                }
                Ok(Shape4::new(s.n, s.c / f2, s.h * factor, s.w * factor))
            }
            LayerSpec::ResidualBlock { channels, .. } => {
                if s.c != *channels {
                    return Err(format!("residual block expects {channels} channels, got {}", s.c));
                }
                Ok(s)
            }
            LayerSpec::ElementwiseAdd { body } => {
                let mut t = s;
                for l in body {
                    t = l.output_shape(t)?;
                }
                if t != s {
                    return Err(format!("skip body maps {s} to {t}; shapes must match"));
                }
                Ok(s)
            }
        }
    }
}

/// Which statistics batch normalization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `(out, in, k, k)`.
    pub weight: Tensor4<T>,
    /// `(1, out, 1, 1)`.
    pub bias: Tensor4<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Tensor4<T>,
    pub beta: Tensor4<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `(1, 1, out, in)`.
    pub weight: Tensor4<T>,
    /// `(1, out, 1, 1)`.
    pub bias: Tensor4<T>,
}

/// A layer with its parameters.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm2d<T>),
    Relu,
    LeakyRelu(T),
    Sigmoid,
    Dense(Dense<T>),
    PixelShuffle(usize),
    /// Output is `x + body(x)`.
    Add(Vec<Layer<T>>),
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Conv { input_shape: Shape4, cols: Vec<T>, oh: usize, ow: usize },
    BatchNorm { xhat: Vec<T>, scale: Vec<T>, batch_stats: bool },
    Mask { input: Vec<T> },
    Sigmoid { output: Vec<T> },
    Dense { input: Vec<T>, input_shape: Shape4 },
    Shuffle { input_shape: Shape4 },
    Add { body: Vec<Cache<T>> },
}

impl<T: Scalar> Layer<T> {
    /// Builds a layer with zeroed weights, unit BN scale, and unit running variance.
    pub fn from_spec(spec: &LayerSpec) -> Layer<T> {
        match *spec {
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding } => Layer::Conv(Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weight: Tensor4::param(Shape4::new(out_channels, in_channels, kernel, kernel)),
                bias: Tensor4::param(Shape4::new(1, out_channels, 1, 1)),
            }),
            LayerSpec::BatchNorm { channels } => {
                let mut gamma = Tensor4::param(Shape4::new(1, channels, 1, 1));
                gamma.data_mut().iter_mut().for_each(|v| *v = T::one());
                Layer::BatchNorm(BatchNorm2d {
                    channels,
                    gamma,
                    beta: Tensor4::param(Shape4::new(1, channels, 1, 1)),
                    running_mean: vec![T::zero(); channels],
                    running_var: vec![T::one(); channels],
                })
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(T::from_f64(slope)),
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Dense { in_features, out_features } => Layer::Dense(Dense {
                in_features,
                out_features,
                weight: Tensor4::param(Shape4::new(1, 1, out_features, in_features)),
                bias: Tensor4::param(Shape4::new(1, out_features, 1, 1)),
            }),
            LayerSpec::PixelShuffle { factor } => Layer::PixelShuffle(factor),
            LayerSpec::ResidualBlock { channels, kernel } => {
                let pad = kernel / 2;
                let conv = LayerSpec::Conv { in_channels: channels, out_channels: channels, kernel, stride: 1, padding: pad };
                let body = [conv.clone(), LayerSpec::BatchNorm { channels }, LayerSpec::Relu, conv, LayerSpec::BatchNorm { channels }];
                Layer::Add(body.iter().map(Layer::from_spec).collect())
            }
            LayerSpec::ElementwiseAdd { ref body } => Layer::Add(body.iter().map(Layer::from_spec).collect()),
        }
    }

    /// Trainable tensors in a fixed pre-order.
    pub fn params(&self) -> Vec<&Tensor4<T>> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Add(body) => body.iter().flat_map(|l| l.params()).collect(),
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor4<T>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Add(body) => body.iter_mut().flat_map(|l| l.params_mut()).collect(),
            _ => vec![],
        }
    }

    /// Non-trainable state (BN running mean, running variance) in pre-order.
    pub fn buffers(&self) -> Vec<&Vec<T>> {
        match self {
            Layer::BatchNorm(b) => vec![&b.running_mean, &b.running_var],
            Layer::Add(body) => body.iter().flat_map(|l| l.buffers()).collect(),
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        match self {
            Layer::BatchNorm(b) => vec![&mut b.running_mean, &mut b.running_var],
            Layer::Add(body) => body.iter_mut().flat_map(|l| l.buffers_mut()).collect(),
            _ => vec![],
        }
    }

    /// Forward pass. In train mode batch norm uses batch statistics and
    /// updates its running estimates. Returns the backward cache when `keep`.
    pub(crate) fn forward(&mut self, x: &Tensor4<T>, mode: Mode, keep: bool) -> (Tensor4<T>, Option<Cache<T>>) {
        match self {
            Layer::Conv(c) => conv_forward(c, x, keep),
            Layer::BatchNorm(b) => bn_forward(b, x, mode, keep),
            Layer::Relu => pointwise(x, keep, |v| if v > T::zero() { v } else { T::zero() }),
            Layer::LeakyRelu(s) => {
                let s = *s;
                pointwise(x, keep, |v| if v > T::zero() { v } else { s * v })
            }
            Layer::Sigmoid => {
                let y: Vec<T> = x.data().iter().map(|&v| sigmoid(v)).collect();
                let cache = keep.then(|| Cache::Sigmoid { output: y.clone() });
                (Tensor4::from_vec(x.shape(), y), cache)
            }
            Layer::Dense(d) => dense_forward(d, x, keep),
            Layer::PixelShuffle(f) => {
                let cache = keep.then_some(Cache::Shuffle { input_shape: x.shape() });
                (pixel_shuffle(x, *f), cache)
            }
            Layer::Add(body) => {
                let mut caches = Vec::new();
                let mut t = x.clone();
                for l in body.iter_mut() {
                    let (y, c) = l.forward(&t, mode, keep);
                    if let Some(c) = c {
                        caches.push(c);
                    }
                    t = y;
                }
                for (o, &i) in t.data_mut().iter_mut().zip(x.data()) {
                    *o = *o + i;
                }
                (t, keep.then_some(Cache::Add { body: caches }))
            }
        }
    }

    /// Inference-mode forward that leaves the layer untouched.
    pub(crate) fn infer(&self, x: &Tensor4<T>) -> Tensor4<T> {
        match self {
            Layer::Conv(c) => conv_forward(c, x, false).0,
            Layer::BatchNorm(b) => bn_infer(b, x).0,
            Layer::Relu => pointwise(x, false, |v| if v > T::zero() { v } else { T::zero() }).0,
            Layer::LeakyRelu(s) => {
                let s = *s;
                pointwise(x, false, |v| if v > T::zero() { v } else { s * v }).0
            }
            Layer::Sigmoid => Tensor4::from_vec(x.shape(), x.data().iter().map(|&v| sigmoid(v)).collect()),
            Layer::Dense(d) => dense_forward(d, x, false).0,
            Layer::PixelShuffle(f) => pixel_shuffle(x, *f),
            Layer::Add(body) => {
                let mut t = x.clone();
                for l in body {
                    t = l.infer(&t);
                }
                for (o, &i) in t.data_mut().iter_mut().zip(x.data()) {
                    *o = *o + i;
                }
                t
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(&mut self, cache: &Cache<T>, g: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        match (self, cache) {
            (Layer::Conv(c), Cache::Conv { input_shape, cols, oh, ow }) => {
                Ok(conv_backward(c, *input_shape, cols, *oh, *ow, g))
            }
            (Layer::BatchNorm(b), Cache::BatchNorm { xhat, scale, batch_stats }) => {
                Ok(bn_backward(b, xhat, scale, *batch_stats, g))
            }
            (Layer::Relu, Cache::Mask { input }) => Ok(Tensor4::from_vec(
                g.shape(),
                g.data().iter().zip(input).map(|(&gv, &x)| if x > T::zero() { gv } else { T::zero() }).collect(),
            )),
            (Layer::LeakyRelu(s), Cache::Mask { input }) => {
                let s = *s;
                Ok(Tensor4::from_vec(
                    g.shape(),
                    g.data().iter().zip(input).map(|(&gv, &x)| if x > T::zero() { gv } else { s * gv }).collect(),
                ))
            }
            (Layer::Sigmoid, Cache::Sigmoid { output }) => Ok(Tensor4::from_vec(
                g.shape(),
                g.data().iter().zip(output).map(|(&gv, &y)| gv * y * (T::one() - y)).collect(),
            )),
            (Layer::Dense(d), Cache::Dense { input, input_shape }) => Ok(dense_backward(d, input, *input_shape, g)),
            (Layer::PixelShuffle(f), Cache::Shuffle { input_shape }) => {
                let out = pixel_unshuffle(g, *f);
                debug_assert_eq!(out.shape(), *input_shape);
                Ok(out)
            }
            (Layer::Add(body), Cache::Add { body: caches }) => {
                let mut t = g.clone();
                for (l, c) in body.iter_mut().zip(caches.iter()).rev() {
                    t = l.backward(c, &t)?;
                }
                for (o, &i) in t.data_mut().iter_mut().zip(g.data()) {
                    *o = *o + i;
                }
                Ok(t)
            }
            _ => Err(NnError::NoForwardCache),
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn pointwise<T: Scalar>(x: &Tensor4<T>, keep: bool, f: impl Fn(T) -> T) -> (Tensor4<T>, Option<Cache<T>>) {
    let y = Tensor4::from_vec(x.shape(), x.data().iter().map(|&v| f(v)).collect());
    (y, keep.then(|| Cache::Mask { input: x.data().to_vec() }))
}

/// Unfolds one batch item into a `(c·k·k) × (oh·ow)` patch matrix.
fn im2col<T: Scalar>(item: &[T], s: Shape4, k: usize, stride: usize, pad: usize, oh: usize, ow: usize, cols: &mut [T]) {
    let plane = oh * ow;
    for c in 0..s.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= s.h as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &item[(c * s.h + iy as usize) * s.w..(c * s.h + iy as usize + 1) * s.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *v = if ix < 0 || ix >= s.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input item.
fn col2im<T: Scalar>(cols: &[T], s: Shape4, k: usize, stride: usize, pad: usize, oh: usize, ow: usize, item: &mut [T]) {
    let plane = oh * ow;
    for c in 0..s.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let base = (c * s.h + iy as usize) * s.w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < s.w as isize {
                            item[base + ix as usize] = item[base + ix as usize] + src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Scalar>(c: &Conv2d<T>, x: &Tensor4<T>, keep: bool) -> (Tensor4<T>, Option<Cache<T>>) {
    let s = x.shape();
    let oh = (s.h + 2 * c.padding - c.kernel) / c.stride + 1;
    let ow = (s.w + 2 * c.padding - c.kernel) / c.stride + 1;
    let rows = s.c * c.kernel * c.kernel;
    let plane = oh * ow;
    let mut out = Tensor4::zeros(Shape4::new(s.n, c.out_channels, oh, ow));
    let mut all_cols = if keep { vec![T::zero(); s.n * rows * plane] } else { Vec::new() };
    let mut scratch = if keep { Vec::new() } else { vec![T::zero(); rows * plane] };
    for n in 0..s.n {
        let cols: &mut [T] = if keep { &mut all_cols[n * rows * plane..(n + 1) * rows * plane] } else { &mut scratch };
        im2col(x.item(n), s, c.kernel, c.stride, c.padding, oh, ow, cols);
        let o = out.item_mut(n);
        for (oc, chunk) in o.chunks_mut(plane).enumerate() {
            let b = c.bias.data()[oc];
            chunk.iter_mut().for_each(|v| *v = b);
        }
        matmul(c.out_channels, rows, plane, c.weight.data(), false, cols, false, o, true);
    }
    let cache = keep.then_some(Cache::Conv { input_shape: s, cols: all_cols, oh, ow });
    (out, cache)
}

fn conv_backward<T: Scalar>(c: &mut Conv2d<T>, s: Shape4, cols: &[T], oh: usize, ow: usize, g: &Tensor4<T>) -> Tensor4<T> {
    let rows = s.c * c.kernel * c.kernel;
    let plane = oh * ow;
    let mut gx = Tensor4::zeros(s);
    let mut gcols = vec![T::zero(); rows * plane];
    for n in 0..s.n {
        let gout = g.item(n);
        let col = &cols[n * rows * plane..(n + 1) * rows * plane];
        {
            let gw = c.weight.grad_mut().expect("conv weight has a gradient buffer");
            matmul(c.out_channels, plane, rows, gout, false, col, true, gw, true);
        }
        {
            let gb = c.bias.grad_mut().expect("conv bias has a gradient buffer");
            for (oc, chunk) in gout.chunks(plane).enumerate() {
                gb[oc] = chunk.iter().fold(gb[oc], |a, &v| a + v);
            }
        }
        matmul(rows, c.out_channels, plane, c.weight.data(), true, gout, false, &mut gcols, false);
        col2im(&gcols, s, c.kernel, c.stride, c.padding, oh, ow, gx.item_mut(n));
    }
    gx
}

/// Per-channel mean and biased variance over batch and space.
fn channel_stats<T: Scalar>(x: &Tensor4<T>) -> (Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let plane = s.h * s.w;
    let count = (s.n * plane) as f64;
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    for n in 0..s.n {
        for (c, chunk) in x.item(n).chunks(plane).enumerate() {
            mean[c] += chunk.iter().map(|v| v.as_f64()).sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for n in 0..s.n {
        for (c, chunk) in x.item(n).chunks(plane).enumerate() {
            var[c] += chunk.iter().map(|v| (v.as_f64() - mean[c]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    (mean, var)
}

fn bn_apply<T: Scalar>(b: &BatchNorm2d<T>, x: &Tensor4<T>, mean: &[f64], var: &[f64]) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let s = x.shape();
    let plane = s.h * s.w;
    let scale: Vec<T> = var.iter().map(|v| T::from_f64(1.0 / (v + BN_EPS).sqrt())).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = Tensor4::zeros(s);
    for n in 0..s.n {
        let base = n * s.item_len();
        for c in 0..s.c {
            let (m, k) = (T::from_f64(mean[c]), scale[c]);
            let (gm, bt) = (b.gamma.data()[c], b.beta.data()[c]);
            for i in base + c * plane..base + (c + 1) * plane {
                let h = (x.data()[i] - m) * k;
                xhat[i] = h;
                out.data_mut()[i] = gm * h + bt;
            }
        }
    }
    (out, xhat, scale)
}

fn bn_infer<T: Scalar>(b: &BatchNorm2d<T>, x: &Tensor4<T>) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let mean: Vec<f64> = b.running_mean.iter().map(|v| v.as_f64()).collect();
    let var: Vec<f64> = b.running_var.iter().map(|v| v.as_f64()).collect();
    bn_apply(b, x, &mean, &var)
}

fn bn_forward<T: Scalar>(b: &mut BatchNorm2d<T>, x: &Tensor4<T>, mode: Mode, keep: bool) -> (Tensor4<T>, Option<Cache<T>>) {
    match mode {
        Mode::Infer => {
            let (out, xhat, scale) = bn_infer(b, x);
            (out, keep.then_some(Cache::BatchNorm { xhat, scale, batch_stats: false }))
        }
        Mode::Train => {
            let s = x.shape();
            let (mean, var) = channel_stats(x);
            let (out, xhat, scale) = bn_apply(b, x, &mean, &var);
            let count = (s.n * s.h * s.w) as f64;
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for c in 0..s.c {
                let rm = b.running_mean[c].as_f64();
                let rv = b.running_var[c].as_f64();
                b.running_mean[c] = T::from_f64((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * mean[c]);
                b.running_var[c] = T::from_f64((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * var[c] * unbias);
            }
            (out, keep.then_some(Cache::BatchNorm { xhat, scale, batch_stats: true }))
        }
    }
}

fn bn_backward<T: Scalar>(b: &mut BatchNorm2d<T>, xhat: &[T], scale: &[T], batch_stats: bool, g: &Tensor4<T>) -> Tensor4<T> {
    let s = g.shape();
    let plane = s.h * s.w;
    let count = (s.n * plane) as f64;
    let mut sum_g = vec![0.0f64; s.c];
    let mut sum_gx = vec![0.0f64; s.c];
    for n in 0..s.n {
        let base = n * s.item_len();
        for c in 0..s.c {
            for i in base + c * plane..base + (c + 1) * plane {
                let gv = g.data()[i].as_f64();
                sum_g[c] += gv;
                sum_gx[c] += gv * xhat[i].as_f64();
            }
        }
    }
    {
        let gg = b.gamma.grad_mut().expect("gamma has a gradient buffer");
        for c in 0..s.c {
            gg[c] = gg[c] + T::from_f64(sum_gx[c]);
        }
    }
    {
        let gb = b.beta.grad_mut().expect("beta has a gradient buffer");
        for c in 0..s.c {
            gb[c] = gb[c] + T::from_f64(sum_g[c]);
        }
    }
    let mut gx = Tensor4::zeros(s);
    for n in 0..s.n {
        let base = n * s.item_len();
        for c in 0..s.c {
            let k = (b.gamma.data()[c] * scale[c]).as_f64();
            let (mg, mgx) = (sum_g[c] / count, sum_gx[c] / count);
            for i in base + c * plane..base + (c + 1) * plane {
                let gv = g.data()[i].as_f64();
                let v = if batch_stats { k * (gv - mg - xhat[i].as_f64() * mgx) } else { k * gv };
                gx.data_mut()[i] = T::from_f64(v);
            }
        }
    }
    gx
}

fn dense_forward<T: Scalar>(d: &Dense<T>, x: &Tensor4<T>, keep: bool) -> (Tensor4<T>, Option<Cache<T>>) {
    let s = x.shape();
    let mut out = Tensor4::zeros(Shape4::new(s.n, d.out_features, 1, 1));
    for n in 0..s.n {
        out.item_mut(n).copy_from_slice(d.bias.data());
    }
    // y (n × out) += x (n × in) · Wᵀ
    matmul(s.n, d.in_features, d.out_features, x.data(), false, d.weight.data(), true, out.data_mut(), true);
    let cache = keep.then(|| Cache::Dense { input: x.data().to_vec(), input_shape: s });
    (out, cache)
}

fn dense_backward<T: Scalar>(d: &mut Dense<T>, input: &[T], s: Shape4, g: &Tensor4<T>) -> Tensor4<T> {
    {
        let gw = d.weight.grad_mut().expect("dense weight has a gradient buffer");
        // gW (out × in) += gᵀ (out × n) · x (n × in)
        matmul(d.out_features, s.n, d.in_features, g.data(), true, input, false, gw, true);
    }
    {
        let gb = d.bias.grad_mut().expect("dense bias has a gradient buffer");
        for n in 0..s.n {
            for (b, &v) in gb.iter_mut().zip(g.item(n)) {
                *b = *b + v;
            }
        }
    }
    let mut gx = Tensor4::zeros(s);
    matmul(s.n, d.out_features, d.in_features, g.data(), false, d.weight.data(), false, gx.data_mut(), false);
    gx
}

/// Sub-pixel rearrangement `(n, c·r², h, w) → (n, c, h·r, w·r)` with
/// `out[n, c, h·r + i, w·r + j] = in[n, c·r² + i·r + j, h, w]`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor4<T>, r: usize) -> Tensor4<T> {
    let s = x.shape();
    let oc = s.c / (r * r);
    let mut out = Tensor4::zeros(Shape4::new(s.n, oc, s.h * r, s.w * r));
    for n in 0..s.n {
        for c in 0..oc {
            for i in 0..r {
                for j in 0..r {
                    let ic = c * r * r + i * r + j;
                    for h in 0..s.h {
                        for w in 0..s.w {
                            let dst = out.index(n, c, h * r + i, w * r + j);
                            out.data_mut()[dst] = x.at(n, ic, h, w);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Scalar>(y: &Tensor4<T>, r: usize) -> Tensor4<T> {
    let s = y.shape();
    let (h, w) = (s.h / r, s.w / r);
    let mut out = Tensor4::zeros(Shape4::new(s.n, s.c * r * r, h, w));
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..r {
                for j in 0..r {
                    let ic = c * r * r + i * r + j;
                    for hh in 0..h {
                        for ww in 0..w {
                            let dst = out.index(n, ic, hh, ww);
                            out.data_mut()[dst] = y.at(n, c, hh * r + i, ww * r + j);
                        }
                    }
                }
            }
        }
    }
    out
}
