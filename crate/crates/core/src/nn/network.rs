use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Layer, LayerSpec, Mode};
use super::tensor::{Scalar, Shape4, Tensor4};
use super::NnError;

/// An ordered chain of layers with parameters, gradients, and the cache of
/// the most recent forward pass.
#[derive(Debug, Clone)]
pub struct Network<T> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    caches: Option<Vec<Cache<T>>>,
    /// Number of leading layers the cached forward pass ran through.
    cached_depth: usize,
    cached_output: Shape4,
}

impl<T: Scalar> Network<T> {
    /// Builds the layer chain with zero weights; see [`Network::init_params`].
    pub fn new(specs: Vec<LayerSpec>) -> Result<Self, NnError> {
        for (i, s) in specs.iter().enumerate() {
            s.validate().map_err(|detail| NnError::InvalidSpec { layer: i, detail })?;
        }
        let layers = specs.iter().map(Layer::from_spec).collect();
        Ok(Self { specs, layers, caches: None, cached_depth: 0, cached_output: Shape4::new(0, 0, 0, 0) })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Shape produced for `input`, or the first layer that rejects it.
    pub fn output_shape(&self, input: Shape4) -> Result<Shape4, NnError> {
        self.shape_through(input, self.specs.len())
    }

    fn shape_through(&self, input: Shape4, depth: usize) -> Result<Shape4, NnError> {
        let mut s = input;
        for (i, spec) in self.specs[..depth].iter().enumerate() {
            s = spec.output_shape(s).map_err(|detail| NnError::Shape { layer: i, detail })?;
        }
        Ok(s)
    }

    /// Full forward pass, caching what [`Network::backward`] needs.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>, NnError> {
        self.forward_depth(x, mode, self.layers.len())
    }

    /// Forward pass that stops before a trailing sigmoid, returning logits.
    pub fn forward_logits(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>, NnError> {
        let depth = self.logit_depth();
        self.forward_depth(x, mode, depth)
    }

    fn logit_depth(&self) -> usize {
        match self.specs.last() {
            Some(LayerSpec::Sigmoid) => self.specs.len() - 1,
            _ => self.specs.len(),
        }
    }

    fn forward_depth(&mut self, x: &Tensor4<T>, mode: Mode, depth: usize) -> Result<Tensor4<T>, NnError> {
        self.shape_through(x.shape(), depth)?;
        let mut caches = Vec::with_capacity(depth);
        let mut t = x.clone();
        for layer in &mut self.layers[..depth] {
            let (y, c) = layer.forward(&t, mode, true);
            caches.push(c.expect("cache requested"));
            t = y;
        }
        self.caches = Some(caches);
        self.cached_depth = depth;
        self.cached_output = t.shape();
        Ok(t)
    }

    /// Inference-mode forward pass; takes `&self`, caches nothing, and
    /// returns bit-identical outputs on repeated calls.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.output_shape(x.shape())?;
        let mut t = x.clone();
        for layer in &self.layers {
            t = layer.infer(&t);
        }
        Ok(t)
    }

    /// Output of every layer in inference mode, in order.
    pub fn activations(&self, x: &Tensor4<T>) -> Result<Vec<Tensor4<T>>, NnError> {
        self.output_shape(x.shape())?;
        let mut out: Vec<Tensor4<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let y = layer.infer(out.last().unwrap_or(x));
            out.push(y);
        }
        Ok(out)
    }

    /// Reverse pass through the cached forward computation. Parameter
    /// gradients accumulate; the gradient wrt the network input is returned.
    pub fn backward(&mut self, upstream: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        if self.caches.is_none() {
            return Err(NnError::NoForwardCache);
        }
        if upstream.shape() != self.cached_output {
            return Err(NnError::Shape {
                layer: self.cached_depth.saturating_sub(1),
                detail: format!("upstream gradient {} does not match output {}", upstream.shape(), self.cached_output),
            });
        }
        let caches = self.caches.take().expect("checked above");
        let depth = self.cached_depth;
        let mut g = upstream.clone();
        for (i, (layer, cache)) in self.layers[..depth].iter_mut().zip(&caches).enumerate().rev() {
            g = layer.backward(cache, &g).map_err(|e| match e {
                NnError::NoForwardCache => NnError::Shape { layer: i, detail: "cache does not match layer".into() },
                other => other,
            })?;
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.caches = None;
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Tensor4<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor4<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<&Vec<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// He-uniform weights (`U(±√(6/fan_in))`), zero biases, BN scale 1 and
    /// shift 0. Fully determined by `seed`.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fn visit<T: Scalar>(layers: &mut [Layer<T>], rng: &mut ChaCha8Rng) {
            for layer in layers {
                match layer {
                    Layer::Conv(c) => {
                        let fan_in = (c.in_channels * c.kernel * c.kernel) as f64;
                        fill_he(c.weight.data_mut(), fan_in, rng);
                        c.bias.data_mut().iter_mut().for_each(|v| *v = T::zero());
                    }
                    Layer::Dense(d) => {
                        fill_he(d.weight.data_mut(), d.in_features as f64, rng);
                        d.bias.data_mut().iter_mut().for_each(|v| *v = T::zero());
                    }
                    Layer::BatchNorm(b) => {
                        b.gamma.data_mut().iter_mut().for_each(|v| *v = T::one());
                        b.beta.data_mut().iter_mut().for_each(|v| *v = T::zero());
                        b.running_mean.iter_mut().for_each(|v| *v = T::zero());
                        b.running_var.iter_mut().for_each(|v| *v = T::one());
                    }
                    Layer::Add(body) => visit(body, rng),
                    _ => {}
                }
            }
        }
        visit(&mut self.layers, &mut rng);
        self.caches = None;
    }

    /// Copy with every parameter and buffer converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut out = Network::<U>::new(self.specs.clone()).expect("specs already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        for (dst, src) in out.buffers_mut().into_iter().zip(self.buffers()) {
            *dst = src.iter().map(|v| U::from_f64(v.as_f64())).collect();
        }
        out
    }
}

fn fill_he<T: Scalar>(w: &mut [T], fan_in: f64, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / fan_in).sqrt();
    for v in w {
        *v = T::from_f64(rng.gen_range(-bound..bound));
    }
}
