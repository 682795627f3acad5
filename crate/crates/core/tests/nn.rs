use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salsr::nn::{
    pixel_shuffle, pixel_unshuffle, AdamConfig, AdamState, GradCheck, Layer, LayerSpec, Mode, NnError, Network,
    Shape4, Tensor4,
};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn random(shape: Shape4, seed: u64) -> Tensor4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_vec(shape, (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Values bounded away from zero so piecewise-linear kinks are not straddled.
fn away_from_zero(shape: Shape4, seed: u64) -> Tensor4<f64> {
    let mut t = random(shape, seed);
    for v in t.data_mut() {
        *v = v.signum() * (0.1 + v.abs());
    }
    t
}

fn net(specs: Vec<LayerSpec>, seed: u64) -> Network<f64> {
    let mut n = Network::new(specs).unwrap();
    n.init_params(seed);
    n
}

fn gradcheck(specs: Vec<LayerSpec>, shape: Shape4, mode: Mode, kinks: bool) {
    let gc = GradCheck::default();
    for seed in SEEDS {
        let mut n = net(specs.clone(), seed);
        // Non-trivial BN affine parameters.
        for l in n.layers_mut() {
            if let Layer::BatchNorm(b) = l {
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
                b.gamma.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
                b.beta.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
                b.running_mean.iter_mut().for_each(|v| *v = rng.gen_range(-0.2..0.2));
                b.running_var.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
            }
        }
        let x = if kinks { away_from_zero(shape, seed) } else { random(shape, seed) };
        let rep = gc.check_network(&mut n, &x, mode, seed, 40).unwrap();
        assert!(rep.passed(), "{specs:?} seed {seed}: {rep:?}");
        assert!(rep.checked > 0);
    }
}

#[test]
fn conv_gradients() {
    gradcheck(vec![LayerSpec::conv3(2, 3, 1)], Shape4::new(2, 2, 5, 5), Mode::Train, false);
    gradcheck(vec![LayerSpec::conv3(2, 3, 2)], Shape4::new(2, 2, 6, 7), Mode::Train, false);
    gradcheck(
        vec![LayerSpec::Conv { in_channels: 1, out_channels: 2, kernel: 2, stride: 1, padding: 0 }],
        Shape4::new(1, 1, 4, 4),
        Mode::Train,
        false,
    );
}

#[test]
fn batchnorm_gradients() {
    let spec = vec![LayerSpec::BatchNorm { channels: 3 }];
    gradcheck(spec.clone(), Shape4::new(2, 3, 3, 3), Mode::Train, false);
    gradcheck(spec, Shape4::new(2, 3, 3, 3), Mode::Infer, false);
}

#[test]
fn activation_gradients() {
    let s = Shape4::new(2, 2, 3, 3);
    gradcheck(vec![LayerSpec::Relu], s, Mode::Train, true);
    gradcheck(vec![LayerSpec::leaky()], s, Mode::Train, true);
    gradcheck(vec![LayerSpec::Sigmoid], s, Mode::Train, false);
}

#[test]
fn dense_gradients() {
    gradcheck(vec![LayerSpec::Dense { in_features: 12, out_features: 5 }], Shape4::new(3, 3, 2, 2), Mode::Train, false);
}

#[test]
fn pixel_shuffle_gradients() {
    gradcheck(vec![LayerSpec::PixelShuffle { factor: 2 }], Shape4::new(2, 8, 3, 3), Mode::Train, false);
}

#[test]
fn residual_and_add_gradients() {
    gradcheck(vec![LayerSpec::ResidualBlock { channels: 2, kernel: 3 }], Shape4::new(2, 2, 4, 4), Mode::Train, false);
    gradcheck(
        vec![LayerSpec::ElementwiseAdd { body: vec![LayerSpec::conv3(2, 2, 1), LayerSpec::Sigmoid] }],
        Shape4::new(2, 2, 4, 4),
        Mode::Train,
        false,
    );
}

#[test]
fn stacked_network_gradients() {
    gradcheck(
        vec![
            LayerSpec::conv3(1, 4, 1),
            LayerSpec::BatchNorm { channels: 4 },
            LayerSpec::leaky(),
            LayerSpec::conv3(4, 4, 2),
            LayerSpec::Dense { in_features: 4 * 3 * 3, out_features: 3 },
            LayerSpec::Sigmoid,
        ],
        Shape4::new(2, 1, 6, 6),
        Mode::Train,
        false,
    );
}

#[test]
fn identity_conv_passes_input_through() {
    let mut n = net(vec![LayerSpec::Conv { in_channels: 1, out_channels: 1, kernel: 1, stride: 1, padding: 0 }], 0);
    n.params_mut()[0].data_mut()[0] = 1.0;
    let x = random(Shape4::new(2, 1, 4, 5), 7);
    assert_eq!(n.forward(&x, Mode::Train).unwrap(), x);
    let g = random(x.shape(), 8);
    assert_eq!(n.backward(&g).unwrap(), g);
}

#[test]
fn relu_and_leaky_examples() {
    let x = Tensor4::from_vec(Shape4::new(1, 1, 1, 3), vec![-1.0, 0.0, 2.0]);
    let mut relu = net(vec![LayerSpec::Relu], 0);
    assert_eq!(relu.forward(&x, Mode::Infer).unwrap().data(), &[0.0, 0.0, 2.0]);
    let leaky = net(vec![LayerSpec::leaky()], 0);
    assert_eq!(leaky.infer(&x).unwrap().data(), &[-0.2, 0.0, 2.0]);
}

#[test]
fn pixel_shuffle_matches_index_formula() {
    let x = random(Shape4::new(1, 4, 3, 3), 3);
    let y = pixel_shuffle(&x, 2);
    assert_eq!(y.shape(), Shape4::new(1, 1, 6, 6));
    for h in 0..3 {
        for w in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(y.at(0, 0, 2 * h + i, 2 * w + j), x.at(0, i * 2 + j, h, w));
                }
            }
        }
    }
}

#[test]
fn conv_bias_gradient_counts_positions() {
    let mut n = net(vec![LayerSpec::conv3(2, 3, 2)], 4);
    let x = random(Shape4::new(2, 2, 7, 5), 1);
    let y = n.forward(&x, Mode::Train).unwrap();
    let (oh, ow) = (y.shape().h, y.shape().w);
    n.backward(&Tensor4::filled(y.shape(), 1.0)).unwrap();
    let bias = n.params()[1].grad().unwrap().to_vec();
    assert_eq!(bias, vec![(2 * oh * ow) as f64; 3]);
}

#[test]
fn batchnorm_train_output_is_standardized() {
    let mut n = net(vec![LayerSpec::BatchNorm { channels: 3 }], 0);
    let mut x = random(Shape4::new(4, 3, 5, 5), 2);
    x.data_mut().iter_mut().for_each(|v| *v = 3.0 * *v + 7.0);
    let y = n.forward(&x, Mode::Train).unwrap();
    for c in 0..3 {
        let vals: Vec<f64> =
            (0..4).flat_map(|b| (0..25).map(move |i| (b, i))).map(|(b, i)| y.at(b, c, i / 5, i % 5)).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-5, "{m}");
        assert!((v - 1.0).abs() < 1e-4, "{v}");
    }
    assert!(n.buffers().iter().all(|b| b.iter().all(|v| v.is_finite())));
    assert!(n.buffers()[1].iter().all(|v| *v >= 0.0));
}

#[test]
fn init_is_seeded_and_he_scaled() {
    let spec = vec![LayerSpec::conv3(64, 32, 1)];
    let a = net(spec.clone(), 11);
    let b = net(spec.clone(), 11);
    let c = net(spec, 12);
    assert_eq!(a.params()[0].data(), b.params()[0].data());
    assert_ne!(a.params()[0].data(), c.params()[0].data());
    let w = a.params()[0].data();
    assert!(w.len() >= 10_000);
    let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
    let expect = 2.0 / (64.0 * 9.0);
    assert!((var / expect - 1.0).abs() < 0.2, "{var} vs {expect}");
    assert!(a.params()[1].data().iter().all(|v| *v == 0.0));
}

#[test]
fn infer_is_pure() {
    let n = net(
        vec![LayerSpec::conv3(1, 2, 1), LayerSpec::BatchNorm { channels: 2 }, LayerSpec::Relu],
        3,
    );
    let x = random(Shape4::new(1, 1, 6, 6), 0);
    let a = n.infer(&x).unwrap();
    let b = n.infer(&x).unwrap();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn identity_network_gradient_is_upstream() {
    let mut n = net(vec![LayerSpec::ElementwiseAdd { body: vec![LayerSpec::PixelShuffle { factor: 2 }, LayerSpec::Relu] }], 0);
    // Shape mismatch inside the skip body is rejected with the layer index.
    let x = random(Shape4::new(1, 4, 2, 2), 0);
    assert!(matches!(n.forward(&x, Mode::Train), Err(NnError::Shape { layer: 0, .. })));

    let mut empty = net(vec![], 0);
    let y = empty.forward(&x, Mode::Train).unwrap();
    assert_eq!(y, x);
    let g = random(x.shape(), 1);
    assert_eq!(empty.backward(&g).unwrap(), g);
}

#[test]
fn backward_errors() {
    let mut n = net(vec![LayerSpec::conv3(1, 1, 1)], 0);
    let g = Tensor4::zeros(Shape4::new(1, 1, 3, 3));
    assert!(matches!(n.backward(&g), Err(NnError::NoForwardCache)));
    n.forward(&random(Shape4::new(1, 1, 3, 3), 0), Mode::Train).unwrap();
    assert!(matches!(n.backward(&Tensor4::zeros(Shape4::new(1, 1, 4, 4))), Err(NnError::Shape { .. })));
}

#[test]
fn forward_reports_failing_layer() {
    let n = net(vec![LayerSpec::conv3(1, 4, 1), LayerSpec::Relu, LayerSpec::conv3(3, 1, 1)], 0);
    match n.infer(&random(Shape4::new(1, 1, 4, 4), 0)) {
        Err(NnError::Shape { layer, .. }) => assert_eq!(layer, 2),
        other => panic!("{other:?}"),
    }
    assert!(matches!(Network::<f32>::new(vec![LayerSpec::PixelShuffle { factor: 1 }]), Err(NnError::InvalidSpec { .. })));
}

#[test]
fn adam_trains_a_conv_toward_a_target() {
    let mut n = Network::<f32>::new(vec![LayerSpec::conv3(1, 1, 1)]).unwrap();
    n.init_params(0);
    let x = random(Shape4::new(2, 1, 6, 6), 1).cast::<f32>();
    let target: Vec<f32> = x.data().iter().map(|v| 0.5 * v + 0.1).collect();
    let mut st = AdamState::for_network(AdamConfig::default(), &n);
    let loss = |y: &Tensor4<f32>| y.data().iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f32>();
    let first = loss(&n.infer(&x).unwrap());
    for _ in 0..200 {
        n.zero_grad();
        let y = n.forward(&x, Mode::Train).unwrap();
        let g: Vec<f32> = y.data().iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        n.backward(&Tensor4::from_vec(y.shape(), g)).unwrap();
        salsr::nn::adam_step(&mut n, &mut st, 1e-2).unwrap();
    }
    assert!(loss(&n.infer(&x).unwrap()) < 0.1 * first);
}

proptest! {
    #[test]
    fn shuffle_round_trips(c in 1usize..4, r in 2usize..4, h in 1usize..5, w in 1usize..5, seed in 0u64..1000) {
        let x = random(Shape4::new(2, c * r * r, h, w), seed);
        prop_assert_eq!(pixel_unshuffle(&pixel_shuffle(&x, r), r), x);
    }
}
