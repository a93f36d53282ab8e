//! Optimization for the GAN, VAE and VAE-GAN variants.
//!
//! Each step runs one discriminator-side update followed by one
//! generator-side update. Randomness (batch order, noise, dropout) comes from a
//! single ChaCha stream held in [`TrainState`], so a seed fixes the trajectory
//! and a checkpoint resumes it exactly.

use std::cell::RefCell;
use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{Batch, PreparedSample};
use crate::conditioning::EmbedderConfig;
use crate::error::{Error, Result};
use crate::geometry::Layout;
use crate::networks::{reparameterize, GeneratorOutput, NetworkConfig, Networks, ParamSets};
use crate::nn::{Ctx, ParamStore};
use crate::objectives::tensor as T;
use crate::objectives::{GeneratorGanLoss, LossReport, LossWeights, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Self::F32 => DType::F32,
            Self::F64 => DType::F64,
        }
    }
}

/// Loss switches; the Table-2 style ablation axes plus two extras used for
/// supervised-only runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossToggles {
    pub enable_adversarial: bool,
    pub enable_giou: bool,
    pub enable_overlap: bool,
    pub enable_misalign: bool,
    pub enable_gen_rec: bool,
    pub enable_uncond_disc: bool,
    /// Direct `lambda_layout` regression of generated boxes onto the truth.
    pub enable_layout_l2: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        Self {
            enable_adversarial: true,
            enable_giou: true,
            enable_overlap: true,
            enable_misalign: true,
            enable_gen_rec: true,
            enable_uncond_disc: true,
            enable_layout_l2: false,
        }
    }
}

impl LossToggles {
    pub const NAMES: [&'static str; 7] = [
        "adversarial",
        "giou",
        "overlap",
        "misalign",
        "gen_rec",
        "uncond_disc",
        "layout_l2",
    ];

    pub fn set(&mut self, name: &str, on: bool) -> Result<()> {
        let slot = match name {
            "adversarial" => &mut self.enable_adversarial,
            "giou" => &mut self.enable_giou,
            "overlap" => &mut self.enable_overlap,
            "misalign" => &mut self.enable_misalign,
            "gen_rec" => &mut self.enable_gen_rec,
            "uncond_disc" => &mut self.enable_uncond_disc,
            "layout_l2" => &mut self.enable_layout_l2,
            other => {
                return Err(Error::config(format!(
                    "unknown toggle {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        *slot = on;
        Ok(())
    }

    pub fn all_off() -> Self {
        Self {
            enable_adversarial: false,
            enable_giou: false,
            enable_overlap: false,
            enable_misalign: false,
            enable_gen_rec: false,
            enable_uncond_disc: false,
            enable_layout_l2: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub seed: u64,
    #[serde(flatten)]
    pub toggles: LossToggles,
    pub generator_gan_loss: GeneratorGanLoss,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    /// 0 evaluates only at the end.
    pub eval_every: u64,
    pub ema_decay: f64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Gan,
            learning_rate: 1e-5,
            batch_size: 64,
            max_steps: 2000,
            seed: 0,
            toggles: LossToggles::default(),
            generator_gan_loss: GeneratorGanLoss::NonSaturating,
            grad_clip: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 0,
            eval_every: 0,
            ema_decay: 0.98,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::config("grad_clip must be non-negative"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2), ("ema_decay", self.ema_decay)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps must be positive"));
        }
        Ok(())
    }
}

/// Serializable Adam moments for one parameter set.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    pub moments: BTreeMap<String, (Tensor, Tensor)>,
}

/// Adam with bias correction and optional global-norm clipping. Parameters
/// without a gradient in a step are left untouched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    pub state: AdamState,
}

impl Adam {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            clip: cfg.grad_clip,
            state: AdamState::default(),
        }
    }

    /// Applies one update and returns the pre-clip global gradient norm.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore) -> Result<f64> {
        let present: Vec<(&String, &candle_core::Var, &Tensor)> = params
            .vars()
            .iter()
            .filter_map(|(name, var)| grads.get(var.as_tensor()).map(|g| (name, var, g)))
            .collect();
        let mut sq = 0.0;
        for (_, _, g) in &present {
            sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(Error::Numeric("non-finite gradient norm".into()));
        }
        let scale = if self.clip > 0.0 && norm > self.clip {
            self.clip / (norm + 1e-6)
        } else {
            1.0
        };
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, var, g) in present {
            let g = g.affine(scale, 0.0)?;
            let (m, v) = match self.state.moments.get(name) {
                Some((m, v)) => (m.clone(), v.clone()),
                None => (g.zeros_like()?, g.zeros_like()?),
            };
            let m = (m.affine(self.beta1, 0.0)? + g.affine(1.0 - self.beta1, 0.0)?)?;
            let v = (v.affine(self.beta2, 0.0)? + g.sqr()?.affine(1.0 - self.beta2, 0.0)?)?;
            let m_hat = m.affine(1.0 / bc1, 0.0)?;
            let v_hat = v.affine(1.0 / bc2, 0.0)?;
            let update = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            let next = (var.as_tensor() - update.affine(self.lr, 0.0)?)?;
            var.set(&next)?;
            self.state.moments.insert(name.clone(), (m, v));
        }
        Ok(norm)
    }
}

/// Everything besides the weights needed to resume training exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub ema: BTreeMap<String, f64>,
    pub order: Vec<usize>,
    pub cursor: usize,
    /// Stored in the checkpoint's tensor section.
    #[serde(skip)]
    pub generator_opt: AdamState,
    #[serde(skip)]
    pub discriminator_opt: AdamState,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        Self {
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a41),
            ema: BTreeMap::new(),
            order: Vec::new(),
            cursor: 0,
            generator_opt: AdamState::default(),
            discriminator_opt: AdamState::default(),
        }
    }

    fn update_ema(&mut self, prefix: &str, report: &LossReport, decay: f64) {
        let entries = report
            .terms
            .iter()
            .map(|(k, v)| (format!("{prefix}.{k}"), *v))
            .chain(std::iter::once((format!("{prefix}.total"), report.total)));
        for (k, v) in entries {
            self.ema
                .entry(k)
                .and_modify(|e| *e = decay * *e + (1.0 - decay) * v)
                .or_insert(v);
        }
    }
}

/// Noise for one step: prior draws feed the adversarial path, `z0` the
/// reparameterized posterior sample.
#[derive(Debug, Clone)]
pub struct Draws {
    pub prior: Tensor,
    pub z0: Tensor,
}

pub fn standard_normal(rng: &mut ChaCha8Rng, shape: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
    let n = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Ok(Tensor::from_vec(values, shape, device)?.to_dtype(dtype)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub generator: LossReport,
    pub discriminator: Option<LossReport>,
    /// Unweighted diagnostics such as `kl` and `layout_l2_to_truth`.
    pub details: BTreeMap<String, f64>,
}

struct Objective {
    total: Tensor,
    terms: BTreeMap<String, Tensor>,
    details: BTreeMap<String, Tensor>,
}

impl Objective {
    fn new(dtype: DType, device: &Device) -> Result<Self> {
        Ok(Self {
            total: Tensor::zeros((), dtype, device)?,
            terms: BTreeMap::new(),
            details: BTreeMap::new(),
        })
    }

    fn add(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.total = (&self.total + &value)?;
        self.terms.insert(name.to_string(), value);
        Ok(())
    }

    fn report(&self) -> Result<(LossReport, BTreeMap<String, f64>)> {
        let terms = self
            .terms
            .iter()
            .map(|(k, v)| Ok((k.clone(), T::scalar(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let report = LossReport::from_terms(terms);
        if let Some(bad) = report.first_non_finite() {
            return Err(Error::Numeric(format!("loss term {bad:?} is not finite")));
        }
        let details = self
            .details
            .iter()
            .map(|(k, v)| Ok((k.clone(), T::scalar(v)?)))
            .collect::<Result<_>>()?;
        Ok((report, details))
    }
}

/// Networks, optimizers and state for one training run.
pub struct Trainer {
    pub config: TrainConfig,
    pub weights: LossWeights,
    pub nets: Networks,
    pub params: ParamSets,
    pub state: TrainState,
    generator_opt: Adam,
    discriminator_opt: Adam,
    device: Device,
}

impl Trainer {
    pub fn new(
        config: &TrainConfig,
        net: &NetworkConfig,
        emb: &EmbedderConfig,
        weights: &LossWeights,
    ) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        let device = Device::Cpu;
        let (nets, params) = Networks::new(net, emb, config.seed, config.precision.dtype(), &device)?;
        Ok(Self {
            config: *config,
            weights: *weights,
            nets,
            params,
            state: TrainState::new(config.seed),
            generator_opt: Adam::from_config(config),
            discriminator_opt: Adam::from_config(config),
            device,
        })
    }

    pub fn dtype(&self) -> DType {
        self.config.precision.dtype()
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn collate(&self, samples: &[&PreparedSample]) -> Result<Batch> {
        Batch::collate(samples, &self.nets.emb_config, &self.nets.net_config, self.dtype(), &self.device)
    }

    /// Moves the optimizer moments into / out of the serializable state.
    pub fn sync_state_from_optimizers(&mut self) {
        self.state.generator_opt = self.generator_opt.state.clone();
        self.state.discriminator_opt = self.discriminator_opt.state.clone();
    }

    pub fn restore_optimizers_from_state(&mut self) {
        self.generator_opt.state = self.state.generator_opt.clone();
        self.discriminator_opt.state = self.state.discriminator_opt.clone();
    }

    /// Next `batch_size` sample indices, reshuffling at epoch boundaries.
    pub fn next_indices(&mut self, dataset_len: usize) -> Result<Vec<usize>> {
        if dataset_len == 0 {
            return Err(Error::config("training set is empty"));
        }
        let mut out = Vec::with_capacity(self.config.batch_size.min(dataset_len));
        while out.len() < self.config.batch_size.min(dataset_len) {
            if self.state.cursor >= self.state.order.len() || self.state.order.len() != dataset_len {
                self.state.order = (0..dataset_len).collect();
                self.state.order.shuffle(&mut self.state.rng);
                self.state.cursor = 0;
            }
            out.push(self.state.order[self.state.cursor]);
            self.state.cursor += 1;
        }
        Ok(out)
    }

    pub fn sample_draws(&mut self, batch: &Batch) -> Result<Draws> {
        let shape = [batch.size, batch.slots, self.nets.emb_config.noise_dim];
        let dtype = self.dtype();
        Ok(Draws {
            prior: standard_normal(&mut self.state.rng, &shape, dtype, &self.device)?,
            z0: standard_normal(&mut self.state.rng, &shape, dtype, &self.device)?,
        })
    }

    /// One full step on the next batch drawn from `data`.
    pub fn step(&mut self, data: &[PreparedSample]) -> Result<StepLosses> {
        let idx = self.next_indices(data.len())?;
        let refs: Vec<&PreparedSample> = idx.iter().map(|&i| &data[i]).collect();
        let batch = self.collate(&refs)?;
        self.step_on(&batch)
    }

    pub fn step_on(&mut self, batch: &Batch) -> Result<StepLosses> {
        match self.config.variant {
            Variant::Gan => self.train_step_gan(batch),
            Variant::Vae => self.train_step_vae(batch),
            Variant::Vaegan => self.train_step_vaegan(batch),
        }
    }

    fn expect_variant(&self, v: Variant) -> Result<()> {
        if self.config.variant != v {
            return Err(Error::config(format!(
                "trainer is configured for {:?}, not {v:?}",
                self.config.variant
            )));
        }
        Ok(())
    }

    pub fn train_step_gan(&mut self, batch: &Batch) -> Result<StepLosses> {
        self.expect_variant(Variant::Gan)?;
        self.run_step(batch)
    }

    pub fn train_step_vae(&mut self, batch: &Batch) -> Result<StepLosses> {
        self.expect_variant(Variant::Vae)?;
        self.run_step(batch)
    }

    pub fn train_step_vaegan(&mut self, batch: &Batch) -> Result<StepLosses> {
        self.expect_variant(Variant::Vaegan)?;
        self.run_step(batch)
    }

    fn uses_discriminator(&self) -> bool {
        self.config.variant.has_gan() && self.config.toggles.enable_adversarial
    }

    fn run_step(&mut self, batch: &Batch) -> Result<StepLosses> {
        if !batch.has_boxes {
            return Err(Error::validation("training batch has no ground-truth layouts"));
        }
        let draws = self.sample_draws(batch)?;
        let dropout_rng = RefCell::new(ChaCha8Rng::seed_from_u64(self.state.rng.next_u64()));
        let ctx = Ctx::train(self.nets.net_config.dropout, &dropout_rng);

        let discriminator = if self.uses_discriminator() {
            let fake = self
                .nets
                .generator
                .forward(batch, &draws.prior, &ctx)?
                .boxes
                .detach();
            let obj = self.discriminator_objective(batch, &fake, &ctx)?;
            let (report, _) = obj.report()?;
            let grads = obj.total.backward()?;
            self.discriminator_opt.step(&self.params.discriminator, &grads)?;
            Some(report)
        } else {
            None
        };

        let obj = self.generator_objective(batch, &draws, &ctx)?;
        let (generator, details) = obj.report()?;
        let grads = obj.total.backward()?;
        self.generator_opt.step(&self.params.generator, &grads)?;

        let decay = self.config.ema_decay;
        self.state.update_ema("g", &generator, decay);
        if let Some(d) = &discriminator {
            self.state.update_ema("d", d, decay);
        }
        let out = StepLosses {
            step: self.state.step,
            generator,
            discriminator,
            details,
        };
        self.state.step += 1;
        Ok(out)
    }

    fn discriminator_objective(&self, batch: &Batch, fake: &Tensor, ctx: &Ctx) -> Result<Objective> {
        let n = &self.nets;
        let w = &self.weights;
        let real = &batch.boxes;
        let mask = &batch.mask;
        let mut obj = Objective::new(self.dtype(), &self.device)?;

        let condition = n.cond_disc.condition(batch, ctx)?;
        let real_c = n.cond_disc.score(real, &condition, mask, ctx)?;
        let fake_c = n.cond_disc.score(fake, &condition, mask, ctx)?;
        obj.add("gan_c", T::discriminator_loss(&real_c.logits, &fake_c.logits)?)?;

        // F^c reconstructs the real conditions from D^c's real-sample features
        let rec = n.aux_cond.forward(&real_c.features, batch, ctx)?;
        let mut dec = T::layout_l2(&rec.boxes, real, mask)?.affine(w.lambda_layout, 0.0)?;
        let mut image = T::background_rec(&rec.background, &batch.bg_target)?;
        if let (Some(p), Some(t), Some(wt)) = (&rec.foreground.patches, &batch.image_targets, &batch.image_weights) {
            image = (image + T::image_rec(p, t, wt)?)?;
        }
        dec = (dec + image.affine(w.lambda_im, 0.0)?)?;
        dec = (dec + self.text_rec(&rec.foreground, batch)?)?;
        obj.add("dec_rec_c", dec)?;

        if self.config.toggles.enable_uncond_disc {
            let real_u = n.uncond_disc.forward(real, mask, ctx)?;
            let fake_u = n.uncond_disc.forward(fake, mask, ctx)?;
            obj.add("gan_u", T::discriminator_loss(&real_u.logits, &fake_u.logits)?)?;
            let boxes_u = n.aux_uncond.forward(&real_u.features, mask, ctx)?;
            obj.add(
                "dec_rec_u",
                T::layout_l2(&boxes_u, real, mask)?.affine(w.lambda_layout, 0.0)?,
            )?;
        }
        Ok(obj)
    }

    fn text_rec(&self, rec: &crate::networks::ForegroundReconstruction, batch: &Batch) -> Result<Tensor> {
        let w = &self.weights;
        Ok(T::text_rec(
            &T::TextLogits {
                chars: &rec.chars,
                classes: &rec.classes,
                lengths: &rec.lengths,
            },
            &T::TextTargets {
                chars: &batch.char_targets,
                char_mask: &batch.char_mask,
                classes: &batch.text_classes,
                lengths: &batch.text_levels,
                text_mask: &batch.text_mask,
            },
            w.lambda_str,
            w.lambda_cls,
            w.lambda_len,
        )?)
    }

    /// Generator-side objective for the configured variant and toggles.
    ///
    /// With a VAE component the posterior reconstruction is the layout that
    /// supervision and regularizers act on; the adversarial term always scores
    /// prior-noise samples.
    pub fn generator_objective_parts(&self, batch: &Batch, draws: &Draws, ctx: &Ctx) -> Result<(Tensor, LossReport, BTreeMap<String, f64>)> {
        let obj = self.generator_objective(batch, draws, ctx)?;
        let (report, details) = obj.report()?;
        Ok((obj.total, report, details))
    }

    fn generator_objective(&self, batch: &Batch, draws: &Draws, ctx: &Ctx) -> Result<Objective> {
        let n = &self.nets;
        let w = &self.weights;
        let tg = &self.config.toggles;
        let variant = self.config.variant;
        let real = &batch.boxes;
        let mask = &batch.mask;
        let mut obj = Objective::new(self.dtype(), &self.device)?;

        let bg = n.generator.encode_background(batch, ctx)?;
        let content = n.generator.content(batch, ctx)?;
        let decode = |noise: &Tensor| -> Result<GeneratorOutput> {
            let tokens = Tensor::cat(&[noise, &content], candle_core::D::Minus1)?;
            n.generator.decode(&bg, &tokens, mask, ctx)
        };

        let prior_fake = if variant.has_gan() { Some(decode(&draws.prior)?) } else { None };
        let posterior_fake = if variant.has_vae() {
            let post = n.latent_encoder.forward(real, mask, ctx)?;
            let z = reparameterize(&post.mu, &post.logvar, &draws.z0)?;
            let fake = decode(&z)?;
            let kl = T::kl_standard_normal(&post.mu, &post.logvar, mask)?;
            let l2 = T::layout_l2(&fake.boxes, real, mask)?;
            obj.details.insert("kl".into(), kl.clone());
            obj.details.insert("vae_layout_l2".into(), l2.clone());
            obj.add(
                "vae",
                (l2.affine(w.lambda_layout, 0.0)? + kl.affine(w.lambda_kl, 0.0)?)?,
            )?;
            Some(fake)
        } else {
            None
        };
        let primary = posterior_fake
            .as_ref()
            .or(prior_fake.as_ref())
            .ok_or_else(|| Error::config("variant produces no layout"))?;

        if let (Some(fake), true) = (&prior_fake, tg.enable_adversarial) {
            let mode = self.config.generator_gan_loss;
            let cond_out = n.cond_disc.forward(&fake.boxes, batch, ctx)?;
            let mut gan = T::generator_loss(&cond_out.logits, mode)?;
            if tg.enable_uncond_disc {
                let u = n.uncond_disc.forward(&fake.boxes, mask, ctx)?;
                gan = (gan + T::generator_loss(&u.logits, mode)?)?;
            }
            obj.add("gan", gan)?;
        }
        if tg.enable_giou {
            obj.add(
                "giou",
                T::giou_dissimilarity(&primary.boxes, real, mask)?.affine(w.lambda_giou, 0.0)?,
            )?;
        }
        if tg.enable_gen_rec {
            let rec = n.reconstructor.forward(&primary.features, batch, ctx)?;
            let mut value = self.text_rec(&rec, batch)?;
            if let (Some(p), Some(t), Some(wt)) = (&rec.patches, &batch.image_targets, &batch.image_weights) {
                value = (value + T::image_rec(p, t, wt)?.affine(w.lambda_im, 0.0)?)?;
            }
            obj.add("rec", value)?;
        }
        if tg.enable_overlap {
            obj.add("overlap", T::overlap(&primary.boxes, mask)?.affine(w.lambda_overlap, 0.0)?)?;
        }
        if tg.enable_misalign {
            obj.add(
                "misalign",
                T::misalignment(&primary.boxes, mask)?.affine(w.lambda_misalign, 0.0)?,
            )?;
        }
        if tg.enable_layout_l2 {
            obj.add(
                "layout",
                T::layout_l2(&primary.boxes, real, mask)?.affine(w.lambda_layout, 0.0)?,
            )?;
        }
        obj.details.insert(
            "layout_l2_to_truth".into(),
            T::layout_l2(&primary.boxes.detach(), real, mask)?,
        );
        Ok(obj)
    }

    /// Samples layouts in evaluation mode with the given per-slot noise.
    pub fn predict(&self, batch: &Batch, noise: &Tensor) -> Result<Vec<Layout>> {
        let out = self.nets.generator.forward(batch, noise, &Ctx::eval())?;
        batch.layouts(&out.boxes)
    }

    /// Layouts for `samples` with noise from a dedicated seeded stream.
    pub fn predict_samples(&self, samples: &[PreparedSample], seed: u64) -> Result<Vec<Layout>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.config.batch_size.max(1)) {
            let refs: Vec<&PreparedSample> = chunk.iter().collect();
            let batch = self.collate(&refs)?;
            let noise = standard_normal(
                &mut rng,
                &[batch.size, batch.slots, self.nets.emb_config.noise_dim],
                self.dtype(),
                &self.device,
            )?;
            out.extend(self.predict(&batch, &noise)?);
        }
        Ok(out)
    }
}
