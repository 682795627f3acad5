use serde::{Deserialize, Serialize};

use super::feature::FeatureExtractor;
use super::GanError;
use crate::imgcore::Plane;
use crate::nn::{Shape4, Tensor4};
use crate::saliency::{saliency_map, saliency_with_trace, SaliencyConfig, SaliencyMap, SaliencyTrace};

/// How saliency enters the weighted MSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WmseForm {
    /// `(1/WH) Σ (w_hr·hr − w_sr·sr)²`, each image weighted by its own saliency.
    #[default]
    Verbatim,
    /// `(1/WH) Σ w_hr·(hr − sr)²`.
    ErrorWeighted,
}

impl std::str::FromStr for WmseForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "verbatim" => Ok(Self::Verbatim),
            "error-weighted" => Ok(Self::ErrorWeighted),
            other => Err(format!("unknown w-MSE form {other:?} (expected verbatim or error-weighted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the adversarial term.
    pub alpha: f64,
    pub lambda_wmse: f64,
    pub lambda_feat: f64,
    pub lambda_sal: f64,
    pub wmse_form: WmseForm,
    pub saliency: SaliencyConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            lambda_wmse: 1.0,
            lambda_feat: 1.0,
            lambda_sal: 1.0,
            wmse_form: WmseForm::Verbatim,
            saliency: SaliencyConfig::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda_wmse", self.lambda_wmse),
            ("lambda_feat", self.lambda_feat),
            ("lambda_sal", self.lambda_sal),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GanError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.lambda_wmse + self.lambda_feat + self.lambda_sal == 0.0 {
            return Err(GanError::Config("at least one content weight must be positive".into()));
        }
        self.saliency.validate()?;
        Ok(())
    }
}

/// Individual generator loss terms for one image or a batch mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub wmse: f64,
    pub feat: f64,
    pub sal: f64,
    pub gen: f64,
}

impl LossTerms {
    pub fn all_finite(&self) -> bool {
        [self.wmse, self.feat, self.sal, self.gen].iter().all(|v| v.is_finite())
    }
}

pub fn total_generator_loss(t: &LossTerms, cfg: &LossConfig) -> f64 {
    cfg.lambda_wmse * t.wmse + cfg.lambda_feat * t.feat + cfg.lambda_sal * t.sal + cfg.alpha * t.gen
}

fn same_dims(planes: &[&Plane]) -> Result<(), GanError> {
    let d = planes[0].dims();
    match planes.iter().find(|p| p.dims() != d) {
        Some(p) => Err(GanError::Shape(format!("expected {}x{}, got {}x{}", d.0, d.1, p.width(), p.height()))),
        None => Ok(()),
    }
}

/// Saliency-weighted MSE in the verbatim form.
pub fn loss_weighted_mse(hr: &Plane, sr: &Plane, sal_hr: &SaliencyMap, sal_sr: &SaliencyMap) -> Result<f64, GanError> {
    loss_weighted_mse_form(hr, sr, sal_hr, sal_sr, WmseForm::Verbatim)
}

pub fn loss_weighted_mse_form(
    hr: &Plane,
    sr: &Plane,
    sal_hr: &SaliencyMap,
    sal_sr: &SaliencyMap,
    form: WmseForm,
) -> Result<f64, GanError> {
    same_dims(&[hr, sr, sal_hr.plane(), sal_sr.plane()])?;
    let (a, b, wa, wb) = (hr.data(), sr.data(), sal_hr.plane().data(), sal_sr.plane().data());
    let sum: f64 = match form {
        WmseForm::Verbatim => (0..a.len()).map(|i| (wa[i] * a[i] - wb[i] * b[i]).powi(2)).sum(),
        WmseForm::ErrorWeighted => (0..a.len()).map(|i| wa[i] * (a[i] - b[i]).powi(2)).sum(),
    };
    Ok(sum / a.len() as f64)
}

fn plane_tensor(p: &Plane) -> Tensor4<f64> {
    Tensor4::from_vec(Shape4::new(1, 1, p.height(), p.width()), p.data().to_vec())
}

/// Squared feature distance normalized by the feature map's spatial size.
pub fn loss_feature(hr: &Plane, sr: &Plane, fx: &dyn FeatureExtractor<f64>) -> Result<f64, GanError> {
    same_dims(&[hr, sr])?;
    let fh = fx.features(&plane_tensor(hr))?;
    let fs = fx.features(&plane_tensor(sr))?;
    Ok(feature_distance(&fh, &fs))
}

fn feature_distance(fh: &Tensor4<f64>, fs: &Tensor4<f64>) -> f64 {
    let s = fh.shape();
    let sum: f64 = fh.data().iter().zip(fs.data()).map(|(a, b)| (a - b).powi(2)).sum();
    sum / (s.h * s.w) as f64
}

/// Mean squared difference of the two saliency maps.
pub fn loss_saliency(hr: &Plane, sr: &Plane, cfg: &SaliencyConfig) -> Result<f64, GanError> {
    same_dims(&[hr, sr])?;
    let a = saliency_map(hr, cfg)?;
    let b = saliency_map(sr, cfg)?;
    Ok(mean_sq_diff(a.plane(), b.plane()))
}

fn mean_sq_diff(a: &Plane, b: &Plane) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn check_prob(p: f64) -> Result<f64, GanError> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(GanError::Probability(p))
    }
}

/// `Σ −ln D(G(x))` over the batch.
pub fn loss_generator_adv(d_out: &[f64]) -> Result<f64, GanError> {
    d_out.iter().map(|&p| check_prob(p).map(|p| -p.ln())).sum()
}

/// `−mean ln D(real) − mean ln(1 − D(fake))`.
pub fn loss_discriminator(d_real: &[f64], d_fake: &[f64]) -> Result<f64, GanError> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(GanError::Shape("discriminator loss needs non-empty batches".into()));
    }
    let r: f64 = d_real.iter().map(|&p| check_prob(p).map(|p| -p.ln())).sum::<Result<f64, _>>()?;
    let f: f64 = d_fake.iter().map(|&p| check_prob(p).map(|p| -(1.0 - p).ln())).sum::<Result<f64, _>>()?;
    Ok(r / d_real.len() as f64 + f / d_fake.len() as f64)
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Generator adversarial loss from discriminator logits `z`, where
/// `−ln σ(z) = softplus(−z)`. Returns the value and `∂/∂z`.
pub fn generator_adv_from_logits(z: &[f64]) -> (f64, Vec<f64>) {
    let v = z.iter().map(|&z| softplus(-z)).sum();
    (v, z.iter().map(|&z| sigmoid(z) - 1.0).collect())
}

/// Discriminator loss from logits, with gradients wrt the real and fake logits.
pub fn discriminator_from_logits(z_real: &[f64], z_fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (nr, nf) = (z_real.len() as f64, z_fake.len() as f64);
    let v = z_real.iter().map(|&z| softplus(-z)).sum::<f64>() / nr + z_fake.iter().map(|&z| softplus(z)).sum::<f64>() / nf;
    let gr = z_real.iter().map(|&z| (sigmoid(z) - 1.0) / nr).collect();
    let gf = z_fake.iter().map(|&z| sigmoid(z) / nf).collect();
    (v, gr, gf)
}

/// Everything about a ground-truth patch the content loss needs, computed once.
#[derive(Debug, Clone)]
pub struct HrTarget {
    pub hr: Plane,
    pub saliency: SaliencyMap,
    pub features: Option<Tensor4<f64>>,
}

impl HrTarget {
    pub fn new(hr: Plane, cfg: &LossConfig, fx: Option<&dyn FeatureExtractor<f64>>) -> Result<Self, GanError> {
        let saliency = saliency_map(&hr, &cfg.saliency)?;
        let features = match fx {
            Some(fx) if cfg.lambda_feat > 0.0 => Some(fx.features(&plane_tensor(&hr))?),
            _ => None,
        };
        Ok(Self { hr, saliency, features })
    }
}

/// Content terms for one SR image and the gradient of
/// `λ_w·l_wmse + λ_f·l_feat + λ_s·l_sal` wrt its pixels.
pub fn content_loss_and_grad(
    target: &HrTarget,
    sr: &Plane,
    cfg: &LossConfig,
    fx: Option<&dyn FeatureExtractor<f64>>,
) -> Result<(LossTerms, Plane), GanError> {
    let hr = &target.hr;
    same_dims(&[hr, sr])?;
    let (w, h) = sr.dims();
    let n = sr.len() as f64;
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; sr.len()];

    let needs_trace = cfg.lambda_sal > 0.0 || (cfg.lambda_wmse > 0.0 && cfg.wmse_form == WmseForm::Verbatim);
    let traced: Option<(SaliencyMap, SaliencyTrace)> =
        if needs_trace { Some(saliency_with_trace(sr, &cfg.saliency)?) } else { None };
    // Upstream gradient wrt the SR saliency map, pulled back once at the end.
    let mut g_sal = vec![0.0; sr.len()];

    if cfg.lambda_wmse > 0.0 {
        let (a, wa, x) = (hr.data(), target.saliency.plane().data(), sr.data());
        match cfg.wmse_form {
            WmseForm::Verbatim => {
                let s = traced.as_ref().expect("traced").0.plane().data();
                let mut sum = 0.0;
                for i in 0..x.len() {
                    let e = s[i] * x[i] - wa[i] * a[i];
                    sum += e * e;
                    grad[i] += cfg.lambda_wmse * 2.0 * e * s[i] / n;
                    g_sal[i] += cfg.lambda_wmse * 2.0 * e * x[i] / n;
                }
                terms.wmse = sum / n;
            }
            WmseForm::ErrorWeighted => {
                let mut sum = 0.0;
                for i in 0..x.len() {
                    let e = x[i] - a[i];
                    sum += wa[i] * e * e;
                    grad[i] += cfg.lambda_wmse * 2.0 * wa[i] * e / n;
                }
                terms.wmse = sum / n;
            }
        }
    }

    if cfg.lambda_sal > 0.0 {
        let s = traced.as_ref().expect("traced").0.plane().data();
        let t = target.saliency.plane().data();
        let mut sum = 0.0;
        for i in 0..s.len() {
            let e = s[i] - t[i];
            sum += e * e;
            g_sal[i] += cfg.lambda_sal * 2.0 * e / n;
        }
        terms.sal = sum / n;
    }

    if let Some((_, trace)) = &traced {
        if g_sal.iter().any(|v| *v != 0.0) {
            let back = trace.vjp(&Plane::from_raw(w, h, g_sal));
            grad.iter_mut().zip(back.data()).for_each(|(g, b)| *g += b);
        }
    }

    if cfg.lambda_feat > 0.0 {
        let fx = fx.ok_or_else(|| GanError::Config("lambda_feat > 0 needs a feature extractor".into()))?;
        let fh = target.features.as_ref().ok_or_else(|| GanError::Config("target built without features".into()))?;
        let xs = plane_tensor(sr);
        let fs = fx.features(&xs)?;
        if fs.shape() != fh.shape() {
            return Err(GanError::Shape(format!("feature shapes differ: {} vs {}", fs.shape(), fh.shape())));
        }
        terms.feat = feature_distance(fh, &fs);
        let area = (fs.shape().h * fs.shape().w) as f64;
        let up: Vec<f64> = fs.data().iter().zip(fh.data()).map(|(a, b)| cfg.lambda_feat * 2.0 * (a - b) / area).collect();
        let back = fx.vjp(&xs, &Tensor4::from_vec(fs.shape(), up))?;
        grad.iter_mut().zip(back.data()).for_each(|(g, b)| *g += b);
    }

    Ok((terms, Plane::from_raw(w, h, grad)))
}
