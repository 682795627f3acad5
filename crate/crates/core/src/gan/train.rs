use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{build_discriminator, build_generator, DiscriminatorSpec, GeneratorSpec};
use super::feature::FeatureExtractor;
use super::loss::{
    content_loss_and_grad, discriminator_from_logits, generator_adv_from_logits, total_generator_loss, HrTarget,
    LossConfig, LossTerms,
};
use super::GanError;
use crate::degrade::{make_lr, ScaleFactor};
use crate::imgcore::Plane;
use crate::nn::{AdamConfig, AdamState, Mode, Network, Shape4, StepOutcome, Tensor4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_lr: f64,
    pub pretrain_iters: usize,
    pub gan_lr: f64,
    pub gan_iters: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Discriminator updates per iteration.
    pub d_steps: usize,
    /// Generator updates per iteration.
    pub g_steps: usize,
    /// Total upscaling; trained as `log2(scale)` cascaded ×2 stages.
    pub scale: ScaleFactor,
    /// Side of the square HR training patches.
    pub patch_size: usize,
    /// Iterations between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Iterations between sample grids; 0 disables them.
    pub sample_every: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_lr: 1e-3,
            pretrain_iters: 1000,
            gan_lr: 1e-3,
            gan_iters: 2000,
            batch_size: 8,
            seed: 0,
            d_steps: 1,
            g_steps: 1,
            scale: ScaleFactor::X2,
            patch_size: 32,
            checkpoint_every: 500,
            sample_every: 500,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Iteration counts of the full-scale setting.
    pub fn full_scale() -> Self {
        Self { pretrain_iters: 100_000, gan_iters: 100_000, patch_size: 96, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        for (name, v) in [("pretrain_lr", self.pretrain_lr), ("gan_lr", self.gan_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GanError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 || self.d_steps == 0 || self.g_steps == 0 {
            return Err(GanError::Config("batch_size, d_steps and g_steps must be positive".into()));
        }
        let s = self.scale.as_usize();
        if self.patch_size < 2 * s || self.patch_size % s != 0 {
            return Err(GanError::Config(format!(
                "patch_size {} must be a multiple of the scale {s} and at least {}",
                self.patch_size,
                2 * s
            )));
        }
        Ok(())
    }
}

/// Aligned LR/HR planes for one ×2 stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub lr: Plane,
    pub hr: Plane,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pairs: Vec<Pair>,
}

impl Dataset {
    pub fn new(pairs: Vec<Pair>) -> Result<Self, GanError> {
        let first = pairs.first().ok_or(GanError::EmptyDataset)?;
        let (lw, lh) = first.lr.dims();
        for (i, p) in pairs.iter().enumerate() {
            if p.lr.dims() != (lw, lh) || p.hr.dims() != (2 * lw, 2 * lh) {
                return Err(GanError::Shape(format!(
                    "pair {i}: lr {}x{} / hr {}x{} inconsistent with lr {lw}x{lh} / hr {}x{}",
                    p.lr.width(),
                    p.lr.height(),
                    p.hr.width(),
                    p.hr.height(),
                    2 * lw,
                    2 * lh
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Pairs whose LR halves are the ×2 degradations of `hrs`.
    pub fn from_hr(hrs: Vec<Plane>) -> Result<Self, GanError> {
        let pairs = hrs
            .into_iter()
            .map(|hr| Ok(Pair { lr: make_lr(&hr, ScaleFactor::X2)?, hr }))
            .collect::<Result<Vec<_>, GanError>>()?;
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lr_dims(&self) -> (usize, usize) {
        self.pairs[0].lr.dims()
    }

    pub fn hr_dims(&self) -> (usize, usize) {
        self.pairs[0].hr.dims()
    }

    /// LR and HR batches of the given items, shape `(n, 1, h, w)`.
    pub fn batch(&self, idx: &[usize]) -> (Tensor4<f32>, Tensor4<f32>) {
        let stack = |f: &dyn Fn(&Pair) -> &Plane| {
            let (w, h) = f(&self.pairs[0]).dims();
            let data = idx.iter().flat_map(|&i| f(&self.pairs[i]).data().iter().map(|&v| v as f32)).collect();
            Tensor4::from_vec(Shape4::new(idx.len(), 1, h, w), data)
        };
        (stack(&|p| &p.lr), stack(&|p| &p.hr))
    }
}

/// Per-stage HR targets of a cascade: stage `k` (0-based) upsamples from
/// `hr / 2^(S−k)` to `hr / 2^(S−k−1)`.
pub fn cascade_datasets(hrs: &[Plane], scale: ScaleFactor) -> Result<Vec<Dataset>, GanError> {
    let stages = scale.stages();
    (0..stages)
        .map(|k| {
            let down = 1u32 << (stages - 1 - k);
            let targets = hrs
                .iter()
                .map(|hr| if down == 1 { Ok(hr.clone()) } else { make_lr(hr, ScaleFactor::new(down)?) })
                .collect::<Result<Vec<_>, _>>()?;
            Dataset::from_hr(targets)
        })
        .collect()
}

/// Square crops at seeded random positions, `per_image` from each plane.
pub fn extract_patches(planes: &[Plane], size: usize, per_image: usize, seed: u64) -> Result<Vec<Plane>, GanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(planes.len() * per_image);
    for (i, p) in planes.iter().enumerate() {
        let (w, h) = p.dims();
        if w < size || h < size {
            return Err(GanError::Shape(format!("image {i} is {w}x{h}, smaller than the {size}x{size} patch")));
        }
        for _ in 0..per_image {
            let x = rng.gen_range(0..=w - size);
            let y = rng.gen_range(0..=h - size);
            out.push(p.crop(x, y, size, size));
        }
    }
    Ok(out)
}

/// One line of the adversarial-phase loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iter: usize,
    pub l_wmse: f64,
    pub l_feat: f64,
    pub l_sal: f64,
    pub l_gen: f64,
    pub l_total: f64,
    pub d_loss: f64,
}

impl LossRow {
    pub const HEADER: &'static str = "iter,l_wmse,l_feat,l_sal,l_gen,l_total,d_loss";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iter, self.l_wmse, self.l_feat, self.l_sal, self.l_gen, self.l_total, self.d_loss
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Gan,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Gan => "gan",
        })
    }
}

/// Networks at a checkpoint event.
pub struct Snapshot<'a> {
    pub phase: Phase,
    pub iter: usize,
    /// True for the state at the end of the phase.
    pub last: bool,
    pub g: &'a Network<f32>,
    pub g_adam: &'a AdamState<f32>,
    pub d: Option<(&'a Network<f32>, &'a AdamState<f32>)>,
}

/// Receives logs, checkpoints and samples while training runs.
pub trait TrainObserver {
    fn pretrain_row(&mut self, _iter: usize, _mse: f64) -> Result<(), GanError> {
        Ok(())
    }

    fn gan_row(&mut self, _row: &LossRow) -> Result<(), GanError> {
        Ok(())
    }

    fn checkpoint(&mut self, _snap: &Snapshot<'_>) -> Result<(), GanError> {
        Ok(())
    }

    fn sample(&mut self, _phase: Phase, _iter: usize, _g: &Network<f32>) -> Result<(), GanError> {
        Ok(())
    }
}

/// Observer that discards everything.
#[derive(Debug, Default)]
pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Collects log rows in memory.
#[derive(Debug, Default)]
pub struct MemoryLog {
    pub pretrain: Vec<(usize, f64)>,
    pub gan: Vec<LossRow>,
}

impl TrainObserver for MemoryLog {
    fn pretrain_row(&mut self, iter: usize, mse: f64) -> Result<(), GanError> {
        self.pretrain.push((iter, mse));
        Ok(())
    }

    fn gan_row(&mut self, row: &LossRow) -> Result<(), GanError> {
        self.gan.push(*row);
        Ok(())
    }
}

fn due(iter: usize, every: usize) -> bool {
    every > 0 && iter % every == 0
}

fn sample_batch(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.gen_range(0..n)).collect()
}

/// Seed of the batch-order stream, kept apart from the weight seeds.
fn data_seed(seed: u64, phase: Phase) -> u64 {
    seed ^ match phase {
        Phase::Pretrain => 0x7072_6574,
        Phase::Gan => 0x6761_6e00,
    }
}

fn discriminator_seed(seed: u64) -> u64 {
    seed.wrapping_add(0xd15c)
}

/// Trains a freshly initialized generator on plain pixel MSE.
pub fn pretrain_generator(
    ds: &Dataset,
    gspec: &GeneratorSpec,
    tcfg: &TrainConfig,
    obs: &mut dyn TrainObserver,
) -> Result<Network<f32>, GanError> {
    tcfg.validate()?;
    if gspec.image_channels != 1 {
        return Err(GanError::Config("training runs on single-channel (luma) patches".into()));
    }
    if ds.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let mut g = build_generator::<f32>(gspec)?;
    g.init_params(tcfg.seed);
    let mut adam = AdamState::for_network(tcfg.adam, &g);
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed(tcfg.seed, Phase::Pretrain));
    for iter in 1..=tcfg.pretrain_iters {
        let idx = sample_batch(&mut rng, ds.len(), tcfg.batch_size);
        let (lr, hr) = ds.batch(&idx);
        g.zero_grad();
        let sr = g.forward(&lr, Mode::Train)?;
        let n = sr.len() as f64;
        let mut mse = 0.0;
        let grad: Vec<f32> = sr
            .data()
            .iter()
            .zip(hr.data())
            .map(|(&s, &h)| {
                let e = f64::from(s) - f64::from(h);
                mse += e * e;
                (2.0 * e / n) as f32
            })
            .collect();
        mse /= n;
        if !mse.is_finite() {
            return Err(GanError::Divergence { phase: Phase::Pretrain, iter, detail: format!("mse = {mse}") });
        }
        g.backward(&Tensor4::from_vec(sr.shape(), grad))?;
        adam.step(&mut g.params_mut(), tcfg.pretrain_lr)?;
        obs.pretrain_row(iter, mse)?;
        if due(iter, tcfg.sample_every) {
            obs.sample(Phase::Pretrain, iter, &g)?;
        }
        if due(iter, tcfg.checkpoint_every) && iter != tcfg.pretrain_iters {
            obs.checkpoint(&Snapshot { phase: Phase::Pretrain, iter, last: false, g: &g, g_adam: &adam, d: None })?;
        }
    }
    g.clear_cache();
    obs.checkpoint(&Snapshot {
        phase: Phase::Pretrain,
        iter: tcfg.pretrain_iters,
        last: true,
        g: &g,
        g_adam: &adam,
        d: None,
    })?;
    Ok(g)
}

/// Where the adversarial phase's generator comes from.
pub enum GanStart {
    /// An already pretrained generator.
    Pretrained(Network<f32>),
    /// Pretrain a generator of this layout first.
    Pretrain(GeneratorSpec),
}

/// Counters reported alongside the trained networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    /// Optimizer steps skipped because a gradient was not finite.
    pub skipped_g_steps: u64,
    pub skipped_d_steps: u64,
}

#[derive(Debug, Clone)]
pub struct GanOutcome {
    pub g: Network<f32>,
    pub d: Network<f32>,
    pub diagnostics: TrainDiagnostics,
}

fn to_f64(t: &[f32]) -> Vec<f64> {
    t.iter().map(|&v| f64::from(v)).collect()
}

/// Adversarial phase: per iteration, `d_steps` discriminator updates then
/// `g_steps` generator updates on the full generator objective.
///
/// Content terms and the adversarial term are averaged over the batch, so
/// the logged `l_gen` is the per-image `−ln D(G(x))`.
pub fn train_gan(
    ds: &Dataset,
    start: GanStart,
    dspec: &DiscriminatorSpec,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
    fx: Option<&dyn FeatureExtractor<f64>>,
    obs: &mut dyn TrainObserver,
) -> Result<GanOutcome, GanError> {
    tcfg.validate()?;
    lcfg.validate()?;
    if ds.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    if lcfg.lambda_feat > 0.0 && fx.is_none() {
        return Err(GanError::Config("lambda_feat > 0 needs a feature extractor".into()));
    }
    let mut g = match start {
        GanStart::Pretrained(g) => g,
        GanStart::Pretrain(spec) => pretrain_generator(ds, &spec, tcfg, obs)?,
    };
    let (hw, hh) = ds.hr_dims();
    if g.output_shape(Shape4::new(1, 1, ds.lr_dims().1, ds.lr_dims().0))? != Shape4::new(1, 1, hh, hw) {
        return Err(GanError::Shape("generator does not map the dataset's LR size to its HR size".into()));
    }
    let mut d = build_discriminator::<f32>(dspec, hh, hw)?;
    d.init_params(discriminator_seed(tcfg.seed));
    if dspec.image_channels != 1 {
        return Err(GanError::Config("training runs on single-channel (luma) patches".into()));
    }

    let targets = ds
        .pairs()
        .iter()
        .map(|p| HrTarget::new(p.hr.clone(), lcfg, fx))
        .collect::<Result<Vec<_>, _>>()?;

    let mut g_adam = AdamState::for_network(tcfg.adam, &g);
    let mut d_adam = AdamState::for_network(tcfg.adam, &d);
    let mut diag = TrainDiagnostics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed(tcfg.seed, Phase::Gan));
    let bs = tcfg.batch_size;

    for iter in 1..=tcfg.gan_iters {
        let mut d_loss = 0.0;
        for _ in 0..tcfg.d_steps {
            let idx = sample_batch(&mut rng, ds.len(), bs);
            let (lr, hr) = ds.batch(&idx);
            let fake = g.forward(&lr, Mode::Train)?;
            g.clear_cache();
            d.zero_grad();
            let zr = d.forward_logits(&hr, Mode::Train)?;
            let zr64 = to_f64(zr.data());
            let (_, gr, _) = discriminator_from_logits(&zr64, &[0.0]);
            d.backward(&Tensor4::from_vec(zr.shape(), gr.iter().map(|&v| v as f32).collect()))?;
            let zf = d.forward_logits(&fake, Mode::Train)?;
            let zf64 = to_f64(zf.data());
            let (loss, _, gf) = discriminator_from_logits(&zr64, &zf64);
            d.backward(&Tensor4::from_vec(zf.shape(), gf.iter().map(|&v| v as f32).collect()))?;
            if !loss.is_finite() {
                return Err(GanError::Divergence { phase: Phase::Gan, iter, detail: format!("d_loss = {loss}") });
            }
            if d_adam.step(&mut d.params_mut(), tcfg.gan_lr)? == StepOutcome::SkippedNonFinite {
                diag.skipped_d_steps += 1;
            }
            d_loss += loss;
        }
        d_loss /= tcfg.d_steps as f64;

        let mut terms = LossTerms::default();
        for _ in 0..tcfg.g_steps {
            let idx = sample_batch(&mut rng, ds.len(), bs);
            let (lr, _) = ds.batch(&idx);
            g.zero_grad();
            let sr = g.forward(&lr, Mode::Train)?;
            let z = d.forward_logits(&sr, Mode::Train)?;
            let (adv_sum, dz) = generator_adv_from_logits(&to_f64(z.data()));
            let scale = lcfg.alpha / bs as f64;
            let g_adv = d.backward(&Tensor4::from_vec(z.shape(), dz.iter().map(|&v| (v * scale) as f32).collect()))?;

            let s = sr.shape();
            let mut grad: Vec<f32> = g_adv.into_data();
            let mut step_terms = LossTerms { gen: adv_sum / bs as f64, ..Default::default() };
            for (b, &i) in idx.iter().enumerate() {
                let plane = Plane::from_raw(s.w, s.h, to_f64(sr.item(b)));
                let (t, gp) = content_loss_and_grad(&targets[i], &plane, lcfg, fx)?;
                step_terms.wmse += t.wmse / bs as f64;
                step_terms.feat += t.feat / bs as f64;
                step_terms.sal += t.sal / bs as f64;
                let off = b * s.item_len();
                for (dst, &v) in grad[off..off + s.item_len()].iter_mut().zip(gp.data()) {
                    *dst += (v / bs as f64) as f32;
                }
            }
            if !step_terms.all_finite() {
                return Err(GanError::Divergence { phase: Phase::Gan, iter, detail: format!("{step_terms:?}") });
            }
            g.backward(&Tensor4::from_vec(s, grad))?;
            if g_adam.step(&mut g.params_mut(), tcfg.gan_lr)? == StepOutcome::SkippedNonFinite {
                diag.skipped_g_steps += 1;
            }
            terms.wmse += step_terms.wmse;
            terms.feat += step_terms.feat;
            terms.sal += step_terms.sal;
            terms.gen += step_terms.gen;
        }
        let k = tcfg.g_steps as f64;
        let terms = LossTerms { wmse: terms.wmse / k, feat: terms.feat / k, sal: terms.sal / k, gen: terms.gen / k };
        let row = LossRow {
            iter,
            l_wmse: terms.wmse,
            l_feat: terms.feat,
            l_sal: terms.sal,
            l_gen: terms.gen,
            l_total: total_generator_loss(&terms, lcfg),
            d_loss,
        };
        obs.gan_row(&row)?;
        if due(iter, tcfg.sample_every) {
            obs.sample(Phase::Gan, iter, &g)?;
        }
        if due(iter, tcfg.checkpoint_every) && iter != tcfg.gan_iters {
            obs.checkpoint(&Snapshot {
                phase: Phase::Gan,
                iter,
                last: false,
                g: &g,
                g_adam: &g_adam,
                d: Some((&d, &d_adam)),
            })?;
        }
    }
    g.clear_cache();
    d.clear_cache();
    obs.checkpoint(&Snapshot {
        phase: Phase::Gan,
        iter: tcfg.gan_iters,
        last: true,
        g: &g,
        g_adam: &g_adam,
        d: Some((&d, &d_adam)),
    })?;
    Ok(GanOutcome { g, d, diagnostics: diag })
}
