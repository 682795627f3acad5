use crate::nn::{LayerSpec, Mode, Network, NnError, Scalar, Tensor4};

/// Frozen image-to-feature map used by the content loss.
pub trait FeatureExtractor<T: Scalar> {
    fn id(&self) -> String;

    fn features(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError>;

    /// `(∂φ/∂x)ᵀ · upstream` at `x`.
    fn vjp(&self, x: &Tensor4<T>, upstream: &Tensor4<T>) -> Result<Tensor4<T>, NnError>;
}

/// `φ(x) = x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFeatures;

impl<T: Scalar> FeatureExtractor<T> for IdentityFeatures {
    fn id(&self) -> String {
        "identity".into()
    }

    fn features(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(x.clone())
    }

    fn vjp(&self, _x: &Tensor4<T>, upstream: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(upstream.clone())
    }
}

/// Four 3×3 convolutions with ReLU, the second and fourth strided, with
/// He-uniform weights fixed by a seed and never trained.
#[derive(Debug, Clone)]
pub struct ConvFeatures<T> {
    net: Network<T>,
    seed: u64,
    width: usize,
}

impl<T: Scalar> ConvFeatures<T> {
    pub const DEFAULT_SEED: u64 = 0x5a11_e4c7;
    pub const DEFAULT_WIDTH: usize = 16;

    pub fn new(image_channels: usize, width: usize, seed: u64) -> Self {
        let specs = vec![
            LayerSpec::conv3(image_channels, width, 1),
            LayerSpec::Relu,
            LayerSpec::conv3(width, width, 2),
            LayerSpec::Relu,
            LayerSpec::conv3(width, 2 * width, 1),
            LayerSpec::Relu,
            LayerSpec::conv3(2 * width, 2 * width, 2),
            LayerSpec::Relu,
        ];
        let mut net = Network::new(specs).expect("static layout");
        net.init_params(seed);
        Self { net, seed, width }
    }

    pub fn default_for(image_channels: usize) -> Self {
        Self::new(image_channels, Self::DEFAULT_WIDTH, Self::DEFAULT_SEED)
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }
}

impl<T: Scalar> FeatureExtractor<T> for ConvFeatures<T> {
    fn id(&self) -> String {
        format!("conv4-w{}-seed{:#x}", self.width, self.seed)
    }

    fn features(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.net.infer(x)
    }

    fn vjp(&self, x: &Tensor4<T>, upstream: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let mut net = self.net.clone();
        net.forward(x, Mode::Infer)?;
        net.backward(upstream)
    }
}
