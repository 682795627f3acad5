//! Acceptance suite. Each test covers one criterion and writes a single
//! `PASS`/`FAIL` line straight to stdout, so the verdicts show up even when
//! the harness captures test output.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salsr::degrade::{bicubic_upscale, make_lr, ScaleFactor};
use salsr::filters::{convolve, gaussian_kernel};
use salsr::gan::loss::{discriminator_from_logits, generator_adv_from_logits, sigmoid};
use salsr::gan::{
    apply_stage, build_generator, content_loss_and_grad, loss_discriminator, loss_feature, loss_generator_adv,
    loss_saliency, loss_weighted_mse, loss_weighted_mse_form, super_resolve_plane, total_generator_loss,
    ConvFeatures, FeatureExtractor, GanError, GeneratorSpec, HrTarget, LossConfig, LossTerms, WmseForm,
};
use salsr::imgcore::{read_raw_map, write_raw_map, Plane};
use salsr::metrics::{mse, psnr_from_mse, rmse, s3_sharpness, ssim};
use salsr::nn::{
    decode_checkpoint, encode_checkpoint, AdamConfig, AdamState, GradCheck, GradReport, Layer, LayerSpec, Mode,
    Network, Shape4, Tensor4,
};
use salsr::saliency::{
    curvature_raw, entropy_raw, saliency_branch_signature, saliency_components, saliency_map, SaliencyConfig,
    SaliencyMap,
};
use salsr::stats::{wilcoxon_signed_rank, PMethod, PairedSample};
use salsr::synth::vessel_plane;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs one criterion, prints its verdict and fails the test on FAIL.
fn criterion(n: u32, title: &str, limit: Option<Duration>, body: impl FnOnce() -> Outcome) {
    let t0 = Instant::now();
    let mut outcome = body();
    let took = t0.elapsed();
    if let (Ok(_), Some(limit)) = (&outcome, limit) {
        if took > limit {
            outcome = Err(format!("took {took:.1?}, limit {limit:?}"));
        }
    }
    let line = match &outcome {
        Ok(detail) => format!("PASS criterion {n}: {title} ({detail}; {took:.2?})"),
        Err(why) => format!("FAIL criterion {n}: {title}: {why}"),
    };
    let _ = writeln!(std::io::stdout(), "{line}");
    if let Err(why) = outcome {
        panic!("criterion {n} failed: {why}");
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_plane(w: usize, h: usize, r: &mut ChaCha8Rng) -> Plane {
    Plane::new(w, h, (0..w * h).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap()
}

fn noisy(base: &Plane, amp: f64, seed: u64) -> Plane {
    let mut r = rng(seed);
    Plane::new(base.width(), base.height(), base.data().iter().map(|v| v + r.gen_range(-amp..amp)).collect()).unwrap()
}

#[test]
fn c01_paraboloid_curvature() {
    criterion(1, "curvature of x^2+y^2 is 1/r", Some(Duration::from_secs(1)), || {
        let c = 32.0;
        let p = Plane::from_fn(65, 65, |x, y| (x as f64 - c).powi(2) + (y as f64 - c).powi(2));
        let k = curvature_raw(&p).map_err(|e| e.to_string())?;
        let (mut worst, mut n) = (0.0f64, 0);
        for y in 0..65 {
            for x in 0..65 {
                let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                if (3.0..=20.0).contains(&r) {
                    worst = worst.max((k.get(x, y).abs() - 1.0 / r).abs() * r);
                    n += 1;
                }
            }
        }
        ensure(worst < 0.05, || format!("max relative error {worst:.3e}"))?;
        Ok(format!("{n} pixels, max relative error {worst:.2e}"))
    });
}

#[test]
fn c02_saliency_invariants() {
    criterion(2, "saliency invariants", Some(Duration::from_secs(10)), || {
        let cfg = SaliencyConfig::default();
        let mut r = rng(2);
        for i in 0..100 {
            let (w, h) = (r.gen_range(8..40), r.gen_range(8..40));
            let p = if i % 2 == 0 { random_plane(w, h, &mut r) } else { vessel_plane(w, h, i) };
            let s = saliency_map(&p, &cfg).map_err(|e| e.to_string())?;
            ensure(s.plane().data().iter().all(|v| (0.0..=1.0).contains(v)), || format!("image {i} leaves [0,1]"))?;
        }
        for seed in 0..5 {
            let p = vessel_plane(24, 24, seed);
            let one = saliency_components(&p, &SaliencyConfig { w1: 1.0, ..cfg.clone() }).unwrap();
            ensure(one.saliency.plane() == &one.d_curvature, || "w1=1 is not the curvature branch".into())?;
            let zero = saliency_components(&p, &SaliencyConfig { w1: 0.0, ..cfg.clone() }).unwrap();
            ensure(zero.saliency.plane() == &zero.d_compactness, || "w1=0 is not the compactness branch".into())?;
        }
        let flat = saliency_map(&Plane::filled(16, 16, 0.7), &cfg).unwrap();
        ensure(flat.plane().data().iter().all(|&v| v == 0.0), || "constant image has non-zero saliency".into())?;

        let p = Plane::from_fn(7, 7, |x, y| (((y * 7 + x) % 8) as f64 + 0.5) / 8.0);
        let h = entropy_raw(&p, 7, 8).get(3, 3);
        let mut counts = [0usize; 8];
        for y in 0..7 {
            for x in 0..7 {
                counts[((p.get(x, y) * 8.0) as usize).min(7)] += 1;
            }
        }
        let oracle: f64 = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / 49.0).map(|q| -q * q.log2()).sum();
        ensure((h - oracle).abs() < 0.01, || format!("entropy {h} vs enumeration {oracle}"))?;
        Ok(format!("100 images in range; entropy {h:.6} vs {oracle:.6}"))
    });
}

fn network(specs: Vec<LayerSpec>, seed: u64) -> Network<f64> {
    let mut n = Network::new(specs).unwrap();
    n.init_params(seed);
    let mut r = rng(seed + 100);
    for l in n.layers_mut() {
        if let Layer::BatchNorm(b) = l {
            b.gamma.data_mut().iter_mut().for_each(|v| *v = r.gen_range(0.5..1.5));
            b.beta.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
            b.running_mean.iter_mut().for_each(|v| *v = r.gen_range(-0.2..0.2));
            b.running_var.iter_mut().for_each(|v| *v = r.gen_range(0.5..1.5));
        }
    }
    n
}

fn layer_input(shape: Shape4, seed: u64, away_from_zero: bool) -> Tensor4<f64> {
    let mut r = rng(seed);
    let data = (0..shape.len())
        .map(|_| {
            let v: f64 = r.gen_range(-1.0..1.0);
            if away_from_zero { v.signum() * (0.1 + v.abs()) } else { v }
        })
        .collect();
    Tensor4::from_vec(shape, data)
}

fn uses_sr_saliency(l: &LossConfig) -> bool {
    l.lambda_sal > 0.0 || (l.lambda_wmse > 0.0 && l.wmse_form == WmseForm::Verbatim)
}

/// Smooth piece of the content loss at `v`: the saliency branch pattern and
/// the ReLU sign pattern of the feature network.
fn piece(v: &[f64], l: &LossConfig, fx: Option<&ConvFeatures<f64>>) -> u64 {
    let mut h = DefaultHasher::new();
    if uses_sr_saliency(l) {
        let p = Plane::new(16, 16, v.to_vec()).unwrap();
        saliency_branch_signature(&p, &l.saliency).unwrap().hash(&mut h);
    }
    if let Some(fx) = fx {
        let acts = fx.network().activations(&Tensor4::from_vec(Shape4::new(1, 1, 16, 16), v.to_vec())).unwrap();
        for a in acts.iter().step_by(2) {
            a.data().iter().for_each(|&z| (z > 0.0).hash(&mut h));
        }
    }
    h.finish()
}

fn content_report(l: &LossConfig, fx: Option<&ConvFeatures<f64>>, seed: u64) -> GradReport {
    let gc = GradCheck { step: if uses_sr_saliency(l) { 1e-6 } else { 1e-4 }, ..Default::default() };
    let dyn_fx = fx.map(|f| f as &dyn FeatureExtractor<f64>);
    let hr = vessel_plane(16, 16, seed);
    let sr = noisy(&hr, 0.03, seed + 50);
    let target = HrTarget::new(hr, l, dyn_fx).unwrap();
    let (_, grad) = content_loss_and_grad(&target, &sr, l, dyn_fx).unwrap();
    let no_adv = LossConfig { alpha: 0.0, ..l.clone() };
    let f = |v: &[f64]| {
        let p = Plane::new(16, 16, v.to_vec()).unwrap();
        total_generator_loss(&content_loss_and_grad(&target, &p, l, dyn_fx).unwrap().0, &no_adv)
    };
    gc.check_fn_piecewise(sr.data(), grad.data(), 64, seed, f, |v| piece(v, l, fx))
}

#[test]
fn c03_gradient_checks() {
    criterion(3, "finite-difference gradient checks", Some(Duration::from_secs(60)), || {
        let seeds = [1u64, 2, 3, 4, 5];
        let gc = GradCheck::default();
        let mut total = GradReport::default();
        let layers: Vec<(&str, Vec<LayerSpec>, Shape4, Mode, bool)> = vec![
            ("conv", vec![LayerSpec::conv3(2, 3, 1)], Shape4::new(2, 2, 5, 5), Mode::Train, false),
            ("strided conv", vec![LayerSpec::conv3(2, 3, 2)], Shape4::new(2, 2, 6, 7), Mode::Train, false),
            ("batchnorm train", vec![LayerSpec::BatchNorm { channels: 3 }], Shape4::new(2, 3, 3, 3), Mode::Train, false),
            ("batchnorm infer", vec![LayerSpec::BatchNorm { channels: 3 }], Shape4::new(2, 3, 3, 3), Mode::Infer, false),
            ("relu", vec![LayerSpec::Relu], Shape4::new(2, 2, 3, 3), Mode::Train, true),
            ("leaky relu", vec![LayerSpec::leaky()], Shape4::new(2, 2, 3, 3), Mode::Train, true),
            ("sigmoid", vec![LayerSpec::Sigmoid], Shape4::new(2, 2, 3, 3), Mode::Train, false),
            ("dense", vec![LayerSpec::Dense { in_features: 12, out_features: 5 }], Shape4::new(3, 3, 2, 2), Mode::Train, false),
            ("pixel shuffle", vec![LayerSpec::PixelShuffle { factor: 2 }], Shape4::new(2, 8, 3, 3), Mode::Train, false),
            ("residual block", vec![LayerSpec::ResidualBlock { channels: 2, kernel: 3 }], Shape4::new(2, 2, 4, 4), Mode::Train, false),
            (
                "elementwise add",
                vec![LayerSpec::ElementwiseAdd { body: vec![LayerSpec::conv3(2, 2, 1), LayerSpec::Sigmoid] }],
                Shape4::new(2, 2, 4, 4),
                Mode::Train,
                false,
            ),
        ];
        for (name, specs, shape, mode, kinks) in layers {
            for seed in seeds {
                let mut n = network(specs.clone(), seed);
                let rep = gc.check_network(&mut n, &layer_input(shape, seed, kinks), mode, seed, 40).unwrap();
                ensure(rep.passed() && rep.checked > 0, || format!("{name} seed {seed}: {rep:?}"))?;
                total = total.merge(rep);
            }
        }

        let only_wmse = LossConfig { lambda_feat: 0.0, lambda_sal: 0.0, ..Default::default() };
        let fx = ConvFeatures::<f64>::default_for(1);
        let terms: Vec<(&str, LossConfig, Option<&ConvFeatures<f64>>)> = vec![
            ("w-MSE verbatim", only_wmse.clone(), None),
            ("w-MSE error-weighted", LossConfig { wmse_form: WmseForm::ErrorWeighted, ..only_wmse }, None),
            ("saliency", LossConfig { lambda_wmse: 0.0, lambda_feat: 0.0, ..Default::default() }, None),
            ("feature", LossConfig { lambda_wmse: 0.0, lambda_sal: 0.0, ..Default::default() }, Some(&fx)),
        ];
        for (name, l, fx) in terms {
            for seed in [11u64, 12, 13, 14, 15] {
                let rep = content_report(&l, fx, seed);
                ensure(rep.passed() && rep.checked >= 48, || format!("{name} seed {seed}: {rep:?}"))?;
                total = total.merge(rep);
            }
        }
        for seed in seeds {
            let mut r = rng(seed);
            let z: Vec<f64> = (0..6).map(|_| r.gen_range(-3.0..3.0)).collect();
            let (_, g) = generator_adv_from_logits(&z);
            let f = |v: &[f64]| loss_generator_adv(&v.iter().map(|&x| sigmoid(x)).collect::<Vec<_>>()).unwrap();
            let rep = gc.check_fn(&z, &g, 10, seed, f);
            ensure(rep.passed(), || format!("generator adversarial seed {seed}: {rep:?}"))?;
            total = total.merge(rep);
            let (zr, zf) = z.split_at(3);
            let (_, gr, gf) = discriminator_from_logits(zr, zf);
            let both: Vec<f64> = gr.iter().chain(&gf).copied().collect();
            let f = |v: &[f64]| {
                let p: Vec<f64> = v.iter().map(|&x| sigmoid(x)).collect();
                loss_discriminator(&p[..3], &p[3..]).unwrap()
            };
            let rep = gc.check_fn(&z, &both, 10, seed, f);
            ensure(rep.passed(), || format!("discriminator seed {seed}: {rep:?}"))?;
            total = total.merge(rep);
        }
        ensure(total.max_rel_error < 1e-4, || format!("max relative error {:.2e}", total.max_rel_error))?;
        Ok(format!(
            "{} coordinates, {} skipped at kinks, max relative error {:.2e}, max absolute error {:.2e}",
            total.checked, total.skipped, total.max_rel_error, total.max_abs_error
        ))
    });
}

#[test]
fn c04_loss_identities() {
    criterion(4, "loss identities", None, || {
        let cfg = SaliencyConfig::default();
        let hr = vessel_plane(16, 16, 3);
        let s = saliency_map(&hr, &cfg).unwrap();
        let fx = ConvFeatures::<f64>::default_for(1);
        for form in [WmseForm::Verbatim, WmseForm::ErrorWeighted] {
            ensure(loss_weighted_mse_form(&hr, &hr, &s, &s, form).unwrap() == 0.0, || format!("{form:?} w-MSE at sr=hr"))?;
        }
        ensure(loss_saliency(&hr, &hr, &cfg).unwrap() == 0.0, || "saliency loss at sr=hr".into())?;
        ensure(loss_feature(&hr, &hr, &fx).unwrap() == 0.0, || "feature loss at sr=hr".into())?;
        let l = LossConfig::default();
        let target = HrTarget::new(hr.clone(), &l, Some(&fx)).unwrap();
        let (t, _) = content_loss_and_grad(&target, &hr, &l, Some(&fx)).unwrap();
        ensure(t == LossTerms::default(), || format!("content terms at sr=hr: {t:?}"))?;

        let sr = noisy(&hr, 0.1, 4);
        let ones = SaliencyMap::new(Plane::filled(16, 16, 1.0)).unwrap();
        for form in [WmseForm::Verbatim, WmseForm::ErrorWeighted] {
            let d = (loss_weighted_mse_form(&hr, &sr, &ones, &ones, form).unwrap() - mse(&hr, &sr).unwrap()).abs();
            ensure(d < 1e-12, || format!("{form:?} with unit weights differs from MSE by {d:e}"))?;
        }

        let terms = LossTerms { wmse: 0.3, feat: 0.7, sal: 0.2, gen: 5.0 };
        for k in 0..4 {
            let at = |w: f64| {
                let mut c = LossConfig::default();
                *[&mut c.alpha, &mut c.lambda_wmse, &mut c.lambda_feat, &mut c.lambda_sal].into_iter().nth(k).unwrap() = w;
                total_generator_loss(&terms, &c)
            };
            let (a, b, c, d) = (at(0.0), at(1.0), at(2.0), at(-3.5));
            ensure((c - 2.0 * b + a).abs() < 1e-12 && (d - (a - 3.5 * (b - a))).abs() < 1e-12, || {
                format!("total loss is not linear in weight {k}")
            })?;
        }

        let h2 = Plane::new(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let s2 = Plane::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let w_hr = SaliencyMap::new(Plane::filled(2, 2, 1.0)).unwrap();
        let w_sr = SaliencyMap::new(Plane::filled(2, 2, 0.5)).unwrap();
        let v = loss_weighted_mse(&h2, &s2, &w_hr, &w_sr).unwrap();
        ensure(v == 0.3125, || format!("2x2 hand case gives {v}"))?;
        Ok("zero at identity, unit weights give MSE, linear weights, hand case 0.3125".into())
    });
}

/// SSIM straight from its definition: every valid 11x11 window, explicit 2-D
/// Gaussian weights, centred moments.
fn ssim_direct(a: &Plane, b: &Plane) -> f64 {
    const N: usize = 11;
    let mut wts = [[0.0; N]; N];
    let mut total = 0.0;
    for (j, row) in wts.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let (w, h) = a.dims();
    let (mut sum, mut count) = (0.0, 0);
    for y0 in 0..=h - N {
        for x0 in 0..=w - N {
            let at = |p: &Plane, i: usize, j: usize| p.get(x0 + i, y0 + j);
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..N {
                for i in 0..N {
                    ma += wts[j][i] / total * at(a, i, j);
                    mb += wts[j][i] / total * at(b, i, j);
                }
            }
            let (mut va, mut vb, mut cv) = (0.0, 0.0, 0.0);
            for j in 0..N {
                for i in 0..N {
                    let wt = wts[j][i] / total;
                    let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cv += wt * da * db;
                }
            }
            sum += (2.0 * ma * mb + c1) * (2.0 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

#[test]
fn c05_metric_oracles() {
    criterion(5, "metric oracles", None, || {
        let mut r = rng(5);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let a = random_plane(32, 32, &mut r);
            let b = random_plane(32, 32, &mut r);
            ensure(ssim(&a, &a).unwrap() == 1.0 && rmse(&a, &a).unwrap() == 0.0, || "identity cases".into())?;
            worst = worst.max((ssim(&a, &b).unwrap() - ssim_direct(&a, &b)).abs());
        }
        ensure(worst < 1e-9, || format!("SSIM differs from the direct form by {worst:e}"))?;
        ensure(psnr_from_mse(1e-4) == 40.0, || format!("MSE 1e-4 gives {} dB", psnr_from_mse(1e-4)))?;
        let fixture = vessel_plane(64, 64, 11);
        let mut scores = Vec::new();
        for sigma in [0.0, 0.5, 1.0, 2.0] {
            let p = if sigma == 0.0 { fixture.clone() } else { convolve(&fixture, &gaussian_kernel(9, sigma).unwrap()) };
            scores.push(s3_sharpness(&p).unwrap());
        }
        ensure(scores.windows(2).all(|w| w[1] < w[0]), || format!("S3 over blur levels: {scores:?}"))?;
        Ok(format!("SSIM gap {worst:.1e}; S3 {:.4} > {:.4} > {:.4} > {:.4}", scores[0], scores[1], scores[2], scores[3]))
    });
}

/// Two-sided p over every sign assignment of independently computed average ranks.
fn enumerated_p(d: &[f64]) -> (f64, f64) {
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as f64;
            let tied = abs.iter().filter(|&&b| b == a).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let w = w_plus.min(total - w_plus);
    let n = d.len();
    let hits = (0u32..1 << n)
        .filter(|mask| (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum::<f64>() <= w)
        .count();
    (w, (2.0 * hits as f64 / f64::from(1u32 << n)).min(1.0))
}

#[test]
fn c06_wilcoxon_exact() {
    criterion(6, "Wilcoxon exact branch", None, || {
        let mut r = rng(6);
        for case in 0..50 {
            let n = r.gen_range(5..=12);
            let d: Vec<f64> = (0..n)
                .map(|_| {
                    let v: f64 = r.gen_range(-1.0..1.0);
                    let v = if case % 2 == 0 { (v * 4.0).round() / 4.0 } else { v };
                    if v == 0.0 { 0.25 } else { v }
                })
                .collect();
            let res = wilcoxon_signed_rank(&PairedSample::new(d.clone(), vec![0.0; n]).unwrap()).unwrap();
            let (w, p) = enumerated_p(&d);
            ensure(res.method == PMethod::Exact && res.w_statistic == w && res.p_two_sided == p, || {
                format!("case {case} {d:?}: got W={} p={}, enumeration W={w} p={p}", res.w_statistic, res.p_two_sided)
            })?;
        }
        let all_pos = wilcoxon_signed_rank(&PairedSample::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0; 5]).unwrap()).unwrap();
        ensure(all_pos.p_two_sided == 0.0625, || format!("n=5 all positive gives p={}", all_pos.p_two_sided))?;
        Ok("50 samples match enumeration; n=5 all-positive p=0.0625".into())
    });
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_salsr")
}

fn salsr(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(bin()).args(args).current_dir(dir).output().expect("binary runs")
}

#[test]
fn c07_toy_training_ordering() {
    criterion(7, "toy training: pretrained beats bicubic, saliency loss non-inferior", Some(Duration::from_secs(30 * 60)), || {
        let dir = tempfile::tempdir().unwrap();
        let out = salsr(
            &[
                "ablate", "--synthetic", "200", "--holdout", "50", "--patch-size", "32", "--scale", "2",
                "--pretrain-iters", "4000", "--gan-iters", "500", "--gan-lr", "1e-5", "--g-channels", "32",
                "--residual-blocks", "4", "--d-channels", "16", "--d-dense", "128", "--checkpoint-every", "0",
                "--sample-every", "0", "--grid", "lambda_sal=0,1", "--seed", "0", "-o", "toy",
            ],
            dir.path(),
        );
        ensure(out.status.success(), || format!("ablate failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        let mut rd = csv::Reader::from_path(dir.path().join("toy/ablation.csv")).map_err(|e| e.to_string())?;
        let h = rd.headers().unwrap().clone();
        let col = |name: &str| h.iter().position(|c| c == name).unwrap();
        let (ci, cp, cs) = (col("config"), col("psnr_db"), col("ssim"));
        let rows: HashMap<String, (f64, f64)> = rd
            .records()
            .map(|rec| {
                let rec = rec.unwrap();
                (rec[ci].to_string(), (rec[cp].parse().unwrap(), rec[cs].parse().unwrap()))
            })
            .collect();
        let get = |k: &str| rows.get(k).copied().ok_or_else(|| format!("no {k} row"));
        let (bic, pre, no_sal, sal) = (get("bicubic")?, get("pretrained")?, get("lambda_sal=0")?, get("lambda_sal=1")?);
        ensure(pre.0 - bic.0 >= 0.5, || format!("pretrained {:.3} dB vs bicubic {:.3} dB", pre.0, bic.0))?;
        ensure(sal.1 >= no_sal.1 - 0.01, || format!("SSIM with saliency loss {:.4} vs without {:.4}", sal.1, no_sal.1))?;
        Ok(format!(
            "bicubic {:.2} dB, pretrained {:.2} dB; SSIM lambda_sal=1 {:.4} vs 0 {:.4} ({})",
            bic.0,
            pre.0,
            sal.1,
            no_sal.1,
            if sal.1 > no_sal.1 { "strictly better" } else { "not strictly better" }
        ))
    });
}

#[test]
fn c08_cascade_contract() {
    criterion(8, "x2 stages and cascade composition", None, || {
        let stages: Vec<Network<f32>> = (0..3)
            .map(|k| {
                let mut g = build_generator::<f32>(&GeneratorSpec { base_channels: 8, n_residual_blocks: 1, ..Default::default() }).unwrap();
                g.init_params(40 + k);
                g
            })
            .collect();
        let lr = vessel_plane(10, 7, 8);
        let once = apply_stage(&stages[0], &lr).map_err(|e| e.to_string())?;
        ensure(once.dims() == (20, 14), || format!("x2 stage gives {:?}", once.dims()))?;
        let four = super_resolve_plane(&stages[..2], &lr, ScaleFactor::X4).unwrap();
        let explicit = apply_stage(&stages[1], &apply_stage(&stages[0], &lr).unwrap()).unwrap();
        ensure(four.data().iter().zip(explicit.data()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
            "x4 cascade differs from the explicit composition".into()
        })?;
        let mismatch = super_resolve_plane(&stages[..2], &lr, ScaleFactor::X8);
        ensure(matches!(mismatch, Err(GanError::StageCount { scale: 8, expected: 3, got: 2 })), || {
            format!("x8 with two stages: {mismatch:?}")
        })?;
        let dir = tempfile::tempdir().unwrap();
        let out = salsr(&["sr", "--input", "lr.png", "--output", "sr.png", "--scale", "8", "--stages", "s1,s2"], dir.path());
        ensure(out.status.code() == Some(2), || format!("sr stage mismatch exit {:?}", out.status.code()))?;
        Ok("x2 doubles, x4 bit-exact, stage-count errors in library and CLI".into())
    });
}

fn tree_files(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn c09_reproducible_training() {
    criterion(9, "identical seeds give identical runs", None, || {
        let dir = tempfile::tempdir().unwrap();
        let args = |out: &'static str, seed: &'static str| {
            vec![
                "train", "--synthetic", "16", "--patch-size", "32", "--scale", "4", "--pretrain-iters", "20",
                "--gan-iters", "10", "--batch-size", "4", "--g-channels", "8", "--residual-blocks", "2",
                "--d-channels", "8", "--d-dense", "32", "--checkpoint-every", "5", "--sample-every", "10",
                "--seed", seed, "-o", out,
            ]
        };
        for (out, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
            let o = salsr(&args(out, seed), dir.path());
            ensure(o.status.success(), || format!("train failed: {}", String::from_utf8_lossy(&o.stderr)))?;
        }
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let files = tree_files(&a);
        ensure(files == tree_files(&b), || "run directories hold different files".into())?;
        let mut compared = 0;
        for f in files.iter().filter(|f| f.ends_with(".csv") || f.ends_with(".ckpt")) {
            ensure(fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(), || format!("{f} differs"))?;
            compared += 1;
        }
        let ck = "generator_stage2.ckpt";
        ensure(fs::read(a.join(ck)).unwrap() != fs::read(dir.path().join("c").join(ck)).unwrap(), || {
            "a different seed gave the same generator".into()
        })?;
        Ok(format!("{compared} logs and checkpoints byte-identical"))
    });
}

#[test]
fn c10_formats_round_trip() {
    criterion(10, "checkpoint and raw-map round trips", None, || {
        let mut g = build_generator::<f32>(&GeneratorSpec { base_channels: 8, n_residual_blocks: 2, ..Default::default() }).unwrap();
        g.init_params(10);
        let mut adam = AdamState::for_network(AdamConfig::default(), &g);
        let x = Tensor4::from_vec(Shape4::new(2, 1, 6, 6), (0..72).map(|i| (i as f32 * 0.37).sin()).collect());
        for _ in 0..3 {
            g.zero_grad();
            let y = g.forward(&x, Mode::Train).unwrap();
            g.backward(&y).unwrap();
            adam.step(&mut g.params_mut(), 1e-3).unwrap();
        }
        g.clear_cache();
        let bytes = encode_checkpoint(&g, Some(&adam));
        let back = decode_checkpoint::<f32>(&bytes).map_err(|e| e.to_string())?;
        ensure(encode_checkpoint(&back.network, back.adam.as_ref()) == bytes, || "re-encoding changes the bytes".into())?;
        ensure(back.adam.as_ref() == Some(&adam), || "optimizer state changed".into())?;
        let same = g.params().iter().zip(back.network.params()).all(|(a, b)| {
            a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits())
        });
        ensure(same, || "parameters changed".into())?;
        let f64_net = network(vec![LayerSpec::conv3(1, 2, 1), LayerSpec::BatchNorm { channels: 2 }], 3);
        let b64 = encode_checkpoint(&f64_net, None);
        ensure(encode_checkpoint(&decode_checkpoint::<f64>(&b64).unwrap().network, None) == b64, || "f64 checkpoint".into())?;

        let mut r = rng(10);
        for _ in 0..20 {
            let p = Plane::new(9, 5, (0..45).map(|_| r.gen_range(-1e3..1e3)).collect()).unwrap();
            let mut buf = Vec::new();
            write_raw_map(&p, &mut buf).unwrap();
            let q = read_raw_map(buf.as_slice()).map_err(|e| e.to_string())?;
            ensure(q.dims() == p.dims() && q.data().iter().zip(p.data()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                "raw map changed".into()
            })?;
        }
        let lr = make_lr(&vessel_plane(16, 16, 1), ScaleFactor::X2).unwrap();
        let _ = bicubic_upscale(&lr, ScaleFactor::X2);
        Ok(format!("{} byte checkpoint and 20 raw maps bit-exact", bytes.len()))
    });
}
