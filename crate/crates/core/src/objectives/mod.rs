//! Loss terms and their composition into the GAN, VAE and VAE-GAN objectives.
//!
//! The functions here work on plain `f64` values and are the reference
//! definitions. [`tensor`] holds the batched, differentiable counterparts used
//! by the training loop; the two are tested against each other.

pub mod tensor;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::charset;
use crate::conditioning::quantize_text_length;
use crate::elements::{TextClass, TextElement};
use crate::error::{Error, Result};
use crate::geometry::{alignment_deltas, box_giou, overlap_fraction, Layout};

/// Loss calibration constants. Defaults are the published values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_layout: f64,
    pub lambda_im: f64,
    pub lambda_str: f64,
    pub lambda_cls: f64,
    pub lambda_len: f64,
    #[serde(rename = "lambda_KL")]
    pub lambda_kl: f64,
    #[serde(rename = "lambda_gIoU")]
    pub lambda_giou: f64,
    pub lambda_overlap: f64,
    pub lambda_misalign: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_layout: 500.0,
            lambda_im: 0.5,
            lambda_str: 0.1,
            lambda_cls: 50.0,
            lambda_len: 2.0,
            lambda_kl: 1.0,
            lambda_giou: 4.0,
            lambda_overlap: 7.0,
            lambda_misalign: 17.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self::default().scaled(0.0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            lambda_layout: self.lambda_layout * k,
            lambda_im: self.lambda_im * k,
            lambda_str: self.lambda_str * k,
            lambda_cls: self.lambda_cls * k,
            lambda_len: self.lambda_len * k,
            lambda_kl: self.lambda_kl * k,
            lambda_giou: self.lambda_giou * k,
            lambda_overlap: self.lambda_overlap * k,
            lambda_misalign: self.lambda_misalign * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_layout,
            self.lambda_im,
            self.lambda_str,
            self.lambda_cls,
            self.lambda_len,
            self.lambda_kl,
            self.lambda_giou,
            self.lambda_overlap,
            self.lambda_misalign,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Which generative framework a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gan,
    Vae,
    Vaegan,
}

impl Variant {
    pub fn has_gan(self) -> bool {
        matches!(self, Variant::Gan | Variant::Vaegan)
    }

    pub fn has_vae(self) -> bool {
        matches!(self, Variant::Vae | Variant::Vaegan)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gan" => Ok(Variant::Gan),
            "vae" => Ok(Variant::Vae),
            "vaegan" | "vae-gan" => Ok(Variant::Vaegan),
            other => Err(Error::config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Generator-side adversarial loss form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorGanLoss {
    /// `-log D(fake)`
    #[default]
    NonSaturating,
    /// `log(1 - D(fake))`, the minimax form.
    Saturating,
}

/// Named loss values plus their sum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
}

impl LossReport {
    pub fn from_terms(terms: BTreeMap<String, f64>) -> Self {
        let total = terms.values().sum();
        Self { terms, total }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.terms
            .iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(k, _)| k.as_str())
    }
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "total={:.6}", self.total)?;
        for (k, v) in &self.terms {
            write!(f, " {k}={v:.6}")?;
        }
        Ok(())
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of `logits` against class `target`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::shape(format!(
            "target {target} outside {} logits",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[target])
}

fn check_same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

fn l2(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_len(a.len(), b.len(), "l2 distance")?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean per-box Euclidean distance between matched box parameter vectors.
pub fn layout_l2_loss(fake: &Layout, real: &Layout) -> Result<f64> {
    check_same_len(fake.len(), real.len(), "layout_l2_loss")?;
    let dists = fake
        .boxes()
        .iter()
        .zip(real.boxes())
        .map(|(a, b)| l2(&a.to_array(), &b.to_array()))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(dists))
}

/// Mean L2 distance between flattened patches in `[0, 1]`. Empty input is 0.
pub fn image_rec_loss(p1: &[Vec<f64>], p2: &[Vec<f64>]) -> Result<f64> {
    check_same_len(p1.len(), p2.len(), "image_rec_loss")?;
    let dists = p1
        .iter()
        .zip(p2)
        .map(|(a, b)| l2(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(dists))
}

/// Text reconstruction logits for one element.
#[derive(Debug, Clone, PartialEq)]
pub struct TextPrediction {
    /// One row of `VOCAB_SIZE` logits per decoded character position.
    pub char_logits: Vec<Vec<f64>>,
    pub class_logits: Vec<f64>,
    pub length_logits: Vec<f64>,
}

/// Unweighted text reconstruction components for one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextLossParts {
    pub string: f64,
    pub class: f64,
    pub length: f64,
}

pub fn text_loss_parts(pred: &TextPrediction, truth: &TextElement) -> Result<TextLossParts> {
    if pred.class_logits.len() != TextClass::ALL.len() {
        return Err(Error::shape(format!(
            "expected 4 class logits, got {}",
            pred.class_logits.len()
        )));
    }
    if pred.length_logits.len() != 256 {
        return Err(Error::shape(format!(
            "expected 256 length logits, got {}",
            pred.length_logits.len()
        )));
    }
    let targets = charset::encode_targets(&truth.string, pred.char_logits.len());
    let string = mean(
        targets
            .iter()
            .zip(&pred.char_logits)
            .map(|(&t, row)| {
                if row.len() != charset::VOCAB_SIZE {
                    return Err(Error::shape(format!(
                        "expected {} character logits, got {}",
                        charset::VOCAB_SIZE,
                        row.len()
                    )));
                }
                cross_entropy(row, t as usize)
            })
            .collect::<Result<Vec<_>>>()?,
    );
    let class = cross_entropy(&pred.class_logits, truth.class.index())?;
    let level = quantize_text_length(truth.length() as i64)?;
    let length = cross_entropy(&pred.length_logits, level as usize)?;
    Ok(TextLossParts {
        string,
        class,
        length,
    })
}

/// Mean over text elements of the weighted string, class and length losses.
pub fn text_rec_loss(
    preds: &[TextPrediction],
    truth: &[TextElement],
    weights: &LossWeights,
) -> Result<f64> {
    check_same_len(preds.len(), truth.len(), "text_rec_loss")?;
    let per_element = preds
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let parts = text_loss_parts(p, t)?;
            Ok(weights.lambda_str * parts.string
                + weights.lambda_cls * parts.class
                + weights.lambda_len * parts.length)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(per_element))
}

/// What a reconstruction head produced, or the matching ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionTarget {
    pub layout: Layout,
    /// Flattened background at the reconstruction resolution, in `[0, 1]`.
    pub background: Vec<f64>,
    pub patches: Vec<Vec<f64>>,
    pub texts: Vec<TextElement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub layout: Layout,
    pub background: Vec<f64>,
    pub patches: Vec<Vec<f64>>,
    pub texts: Vec<TextPrediction>,
}

/// Auxiliary decoder reconstruction loss on layout, background and foreground.
pub fn dec_rec_loss(
    rec: &Reconstruction,
    real: &ReconstructionTarget,
    weights: &LossWeights,
) -> Result<f64> {
    let layout = layout_l2_loss(&rec.layout, &real.layout)?;
    let background = l2(&rec.background, &real.background)?;
    let patches = image_rec_loss(&rec.patches, &real.patches)?;
    let text = text_rec_loss(&rec.texts, &real.texts, weights)?;
    Ok(weights.lambda_layout * layout + weights.lambda_im * (background + patches) + text)
}

/// Mean `1 - gIoU` over matched boxes, scaled by `lambda_gIoU`.
pub fn giou_loss(fake: &Layout, real: &Layout, weights: &LossWeights) -> Result<f64> {
    Ok(weights.lambda_giou * giou_dissimilarity(fake, real)?)
}

pub fn giou_dissimilarity(fake: &Layout, real: &Layout) -> Result<f64> {
    check_same_len(fake.len(), real.len(), "giou_loss")?;
    Ok(mean(
        fake.boxes()
            .iter()
            .zip(real.boxes())
            .map(|(a, b)| 1.0 - box_giou(a, b)),
    ))
}

/// Mean over ordered pairs `i != j` of the fraction of box `i` covered by box `j`.
pub fn overlap_loss(layout: &Layout) -> f64 {
    let boxes = layout.boxes();
    let n = boxes.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        for (j, b) in boxes.iter().enumerate() {
            if i != j {
                sum += overlap_fraction(a, b);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Mean over boxes of the smallest alignment delta to any other box.
pub fn misalignment_loss(layout: &Layout) -> f64 {
    let boxes = layout.boxes();
    if boxes.len() < 2 {
        return 0.0;
    }
    mean(boxes.iter().enumerate().map(|(i, a)| {
        boxes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| alignment_deltas(a, b).min())
            .fold(f64::INFINITY, f64::min)
    }))
}

/// Discriminator and generator adversarial losses from raw logits.
///
/// The unconditional branch is skipped when its slices are empty. Returns
/// `(generator, discriminator)`, both in minimization form.
pub fn gan_losses(
    real_c: &[f64],
    fake_c: &[f64],
    real_u: &[f64],
    fake_u: &[f64],
    mode: GeneratorGanLoss,
) -> Result<(f64, f64)> {
    for (name, xs) in [
        ("real_c", real_c),
        ("fake_c", fake_c),
        ("real_u", real_u),
        ("fake_u", fake_u),
    ] {
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite {name} logit")));
        }
    }
    // -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    let disc = |real: &[f64], fake: &[f64]| {
        mean(real.iter().map(|&x| softplus(-x))) + mean(fake.iter().map(|&x| softplus(x)))
    };
    let gen = |fake: &[f64]| match mode {
        GeneratorGanLoss::NonSaturating => mean(fake.iter().map(|&x| softplus(-x))),
        GeneratorGanLoss::Saturating => mean(fake.iter().map(|&x| -softplus(x))),
    };
    let mut d = disc(real_c, fake_c);
    let mut g = gen(fake_c);
    if !real_u.is_empty() || !fake_u.is_empty() {
        d += disc(real_u, fake_u);
        g += gen(fake_u);
    }
    Ok((g, d))
}

/// `KL(N(mu, diag(exp(logvar))) || N(0, I))`.
pub fn kl_to_standard_normal(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    check_same_len(mu.len(), logvar.len(), "kl_to_standard_normal")?;
    Ok(0.5
        * mu
            .iter()
            .zip(logvar)
            .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
            .sum::<f64>())
}

pub fn vae_objective(
    fake: &Layout,
    real: &Layout,
    mu: &[f64],
    logvar: &[f64],
    weights: &LossWeights,
) -> Result<f64> {
    Ok(weights.lambda_layout * layout_l2_loss(fake, real)?
        + weights.lambda_kl * kl_to_standard_normal(mu, logvar)?)
}

/// Loss components feeding [`total_objective`].
///
/// `gan`, `vae` and `rec` are composite values already carrying their internal
/// weights; the remaining terms are unweighted and scaled here.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveTerms {
    pub gan: Option<f64>,
    pub vae: Option<f64>,
    /// Mean `1 - gIoU`.
    pub giou: Option<f64>,
    pub rec: Option<f64>,
    pub overlap: Option<f64>,
    pub misalign: Option<f64>,
    /// Direct layout regression (mean per-box L2) outside the VAE term.
    pub layout: Option<f64>,
}

/// Composes the final objective for `variant`, itemizing every active term.
pub fn total_objective(
    variant: Variant,
    terms: &ObjectiveTerms,
    weights: &LossWeights,
) -> Result<LossReport> {
    let mut out = BTreeMap::new();
    if variant.has_gan() {
        let gan = terms
            .gan
            .ok_or_else(|| Error::config(format!("{variant:?} objective needs a GAN term")))?;
        out.insert("gan".to_string(), gan);
    }
    if variant.has_vae() {
        let vae = terms
            .vae
            .ok_or_else(|| Error::config(format!("{variant:?} objective needs a VAE term")))?;
        out.insert("vae".to_string(), vae);
    }
    let scaled = [
        ("giou", terms.giou, weights.lambda_giou),
        ("rec", terms.rec, 1.0),
        ("overlap", terms.overlap, weights.lambda_overlap),
        ("misalign", terms.misalign, weights.lambda_misalign),
        ("layout", terms.layout, weights.lambda_layout),
    ];
    for (name, value, w) in scaled {
        if let Some(v) = value {
            out.insert(name.to_string(), w * v);
        }
    }
    Ok(LossReport::from_terms(out))
}
