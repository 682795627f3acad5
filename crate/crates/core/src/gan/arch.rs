use serde::{Deserialize, Serialize};

use super::GanError;
use crate::nn::{LayerSpec, Network, Scalar, Shape4, LEAKY_SLOPE};

/// Residual ×2 generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_residual_blocks: usize,
    pub base_channels: usize,
    pub kernel: usize,
    /// 1 for luma-only training, 3 for RGB.
    pub image_channels: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self { n_residual_blocks: 4, base_channels: 64, kernel: 3, image_channels: 1 }
    }
}

impl GeneratorSpec {
    /// Generator of the full-scale setting: sixteen residual blocks.
    pub fn full_scale() -> Self {
        Self { n_residual_blocks: 16, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        if self.base_channels == 0 || self.n_residual_blocks == 0 {
            return Err(GanError::Config("generator needs at least one block and one channel".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(GanError::Config(format!("generator kernel must be odd, got {}", self.kernel)));
        }
        if !matches!(self.image_channels, 1 | 3) {
            return Err(GanError::Config(format!("image_channels must be 1 or 3, got {}", self.image_channels)));
        }
        Ok(())
    }

    fn conv(&self, cin: usize, cout: usize) -> LayerSpec {
        LayerSpec::Conv { in_channels: cin, out_channels: cout, kernel: self.kernel, stride: 1, padding: self.kernel / 2 }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let b = self.base_channels;
        let mut trunk: Vec<LayerSpec> = (0..self.n_residual_blocks)
            .map(|_| LayerSpec::ResidualBlock { channels: b, kernel: self.kernel })
            .collect();
        trunk.push(self.conv(b, b));
        trunk.push(LayerSpec::BatchNorm { channels: b });
        vec![
            self.conv(self.image_channels, b),
            LayerSpec::Relu,
            LayerSpec::ElementwiseAdd { body: trunk },
            self.conv(b, 4 * b),
            LayerSpec::PixelShuffle { factor: 2 },
            LayerSpec::Relu,
            self.conv(b, self.image_channels),
        ]
    }

    /// Trainable scalars, counted from the layout.
    pub fn param_count(&self) -> usize {
        let (b, c, k2) = (self.base_channels, self.image_channels, self.kernel * self.kernel);
        let conv = |i: usize, o: usize| i * o * k2 + o;
        let bn = 2 * b;
        conv(c, b) + self.n_residual_blocks * (2 * conv(b, b) + 2 * bn) + conv(b, b) + bn + conv(b, 4 * b) + conv(b, c)
    }
}

/// Strided convolutional classifier with a sigmoid head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSpec {
    /// Even; channels double every second layer starting from the third.
    pub n_conv_layers: usize,
    pub base_channels: usize,
    pub leaky_slope: f64,
    pub dense_width: usize,
    pub batch_norm: bool,
    pub image_channels: usize,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            n_conv_layers: 8,
            base_channels: 64,
            leaky_slope: LEAKY_SLOPE,
            dense_width: 1024,
            batch_norm: true,
            image_channels: 1,
        }
    }
}

impl DiscriminatorSpec {
    pub fn validate(&self) -> Result<(), GanError> {
        if self.n_conv_layers < 2 || self.n_conv_layers % 2 != 0 {
            return Err(GanError::Config(format!("n_conv_layers must be even and >= 2, got {}", self.n_conv_layers)));
        }
        if self.base_channels == 0 || self.dense_width == 0 || self.image_channels == 0 {
            return Err(GanError::Config("discriminator widths must be positive".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(GanError::Config("leaky slope must be finite".into()));
        }
        Ok(())
    }

    /// Channels of conv layer `i` (0-based): 64, 64, 128, 128, ... for base 64.
    pub fn channels(&self, i: usize) -> usize {
        self.base_channels << (i / 2)
    }

    /// Layers 2, 4, 6, 8 (1-based) are strided.
    pub fn stride(&self, i: usize) -> usize {
        if i % 2 == 1 {
            2
        } else {
            1
        }
    }

    /// Smallest side that survives every strided layer with at least one pixel left.
    pub fn min_side(&self) -> usize {
        1 << (self.n_conv_layers / 2)
    }

    pub fn layers(&self, h: usize, w: usize) -> Result<Vec<LayerSpec>, GanError> {
        self.validate()?;
        let min = self.min_side();
        if h < min || w < min {
            return Err(GanError::Shape(format!("discriminator input {h}x{w} is smaller than {min}x{min}")));
        }
        let leaky = LayerSpec::LeakyRelu { slope: self.leaky_slope };
        let mut out = Vec::new();
        let mut cin = self.image_channels;
        let (mut oh, mut ow) = (h, w);
        for i in 0..self.n_conv_layers {
            let cout = self.channels(i);
            let s = self.stride(i);
            out.push(LayerSpec::conv3(cin, cout, s));
            if i > 0 && self.batch_norm {
                out.push(LayerSpec::BatchNorm { channels: cout });
            }
            out.push(leaky.clone());
            cin = cout;
            oh = (oh - 1) / s + 1;
            ow = (ow - 1) / s + 1;
        }
        out.push(LayerSpec::Dense { in_features: cin * oh * ow, out_features: self.dense_width });
        out.push(leaky);
        out.push(LayerSpec::Dense { in_features: self.dense_width, out_features: 1 });
        out.push(LayerSpec::Sigmoid);
        Ok(out)
    }
}

pub fn build_generator<T: Scalar>(spec: &GeneratorSpec) -> Result<Network<T>, GanError> {
    spec.validate()?;
    Ok(Network::new(spec.layers())?)
}

/// Discriminator for `h × w` inputs.
pub fn build_discriminator<T: Scalar>(spec: &DiscriminatorSpec, h: usize, w: usize) -> Result<Network<T>, GanError> {
    let net = Network::new(spec.layers(h, w)?)?;
    net.output_shape(Shape4::new(1, spec.image_channels, h, w))?;
    Ok(net)
}

/// Input width of the first dense layer of `net`, if it has one.
pub fn dense_input_features(specs: &[LayerSpec]) -> Option<usize> {
    specs.iter().find_map(|s| match s {
        LayerSpec::Dense { in_features, .. } => Some(*in_features),
        _ => None,
    })
}
