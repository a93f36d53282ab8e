//! Batched differentiable losses.
//!
//! Box tensors are `(B, N, 4)` in `(cy, cx, h, w)` order; masks are `(B, N)`
//! with 1 for real slots and 0 for padding, in the box dtype. Every loss is
//! reduced per layout first and then averaged over the batch, so a padded batch
//! reports the same value as the per-layout reference functions.

use candle_core::{DType, Result, Tensor, D};

use super::GeneratorGanLoss;

/// Penalty added to invalid pairs before a min-reduction; above any real delta.
const INVALID_PAIR: f64 = 10.0;

fn param(boxes: &Tensor, k: usize) -> Result<Tensor> {
    boxes.narrow(D::Minus1, k, 1)?.squeeze(D::Minus1)
}

/// `(top, left, bottom, right)` tensors of shape `(B, N)`.
fn edges(boxes: &Tensor) -> Result<[Tensor; 4]> {
    let (cy, cx, h, w) = (
        param(boxes, 0)?,
        param(boxes, 1)?,
        param(boxes, 2)?,
        param(boxes, 3)?,
    );
    let half_h = h.affine(0.5, 0.0)?;
    let half_w = w.affine(0.5, 0.0)?;
    Ok([
        (&cy - &half_h)?,
        (&cx - &half_w)?,
        (&cy + &half_h)?,
        (&cx + &half_w)?,
    ])
}

/// Square root with a zero subgradient at the origin.
pub fn safe_sqrt(x: &Tensor) -> Result<Tensor> {
    let positive = x.gt(0.0)?;
    let s = positive.where_cond(x, &x.ones_like()?)?.sqrt()?;
    positive.where_cond(&s, &x.zeros_like()?)
}

/// Per-layout masked mean of `(B, N)` values, then the batch mean.
fn masked_layout_mean(values: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let sums = (values * mask)?.sum(1)?;
    let counts = mask.sum(1)?.maximum(1.0)?;
    (sums / counts)?.mean_all()
}

pub fn layout_l2(fake: &Tensor, real: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let dist = safe_sqrt(&(fake - real)?.sqr()?.sum(D::Minus1)?)?;
    masked_layout_mean(&dist, mask)
}

/// Elementwise gIoU of matched boxes, shape `(B, N)`.
pub fn giou(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [t1, l1, b1, r1] = edges(a)?;
    let [t2, l2, b2, r2] = edges(b)?;
    let inter_h = (b1.minimum(&b2)? - t1.maximum(&t2)?)?.relu()?;
    let inter_w = (r1.minimum(&r2)? - l1.maximum(&l2)?)?.relu()?;
    let inter = (inter_h * inter_w)?;
    let area_a = (param(a, 2)? * param(a, 3)?)?;
    let area_b = (param(b, 2)? * param(b, 3)?)?;
    let union = ((area_a + area_b)? - &inter)?;
    let hull_h = (b1.maximum(&b2)? - t1.minimum(&t2)?)?;
    let hull_w = (r1.maximum(&r2)? - l1.minimum(&l2)?)?;
    let hull = (hull_h * hull_w)?;
    let iou = (&inter / &union)?;
    iou - ((&hull - &union)? / &hull)?
}

/// Mean `1 - gIoU` (unweighted).
pub fn giou_dissimilarity(fake: &Tensor, real: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let dis = giou(fake, real)?.affine(-1.0, 1.0)?;
    masked_layout_mean(&dis, mask)
}

/// `(B, N, N)` mask of valid ordered pairs `i != j`.
fn pair_mask(mask: &Tensor) -> Result<Tensor> {
    let n = mask.dim(1)?;
    let outer = mask.unsqueeze(2)?.broadcast_mul(&mask.unsqueeze(1)?)?;
    let eye = Tensor::eye(n, mask.dtype(), mask.device())?;
    outer.broadcast_mul(&eye.affine(-1.0, 1.0)?)
}

pub fn overlap(boxes: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let [t, l, b, r] = edges(boxes)?;
    let col = |x: &Tensor| x.unsqueeze(2);
    let row = |x: &Tensor| x.unsqueeze(1);
    let inter_h = (col(&b)?.broadcast_minimum(&row(&b)?)?
        - col(&t)?.broadcast_maximum(&row(&t)?)?)?
    .relu()?;
    let inter_w = (col(&r)?.broadcast_minimum(&row(&r)?)?
        - col(&l)?.broadcast_maximum(&row(&l)?)?)?
    .relu()?;
    let area = (param(boxes, 2)? * param(boxes, 3)?)?;
    let frac = (inter_h * inter_w)?.broadcast_div(&col(&area)?)?;
    let pairs = pair_mask(mask)?;
    let sums = (frac * &pairs)?.sum((1, 2))?;
    let counts = pairs.sum((1, 2))?.maximum(1.0)?;
    (sums / counts)?.mean_all()
}

pub fn misalignment(boxes: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let [t, l, b, r] = edges(boxes)?;
    let cy = param(boxes, 0)?;
    let cx = param(boxes, 1)?;
    let delta = |x: &Tensor| -> Result<Tensor> {
        x.unsqueeze(2)?.broadcast_sub(&x.unsqueeze(1)?)?.abs()
    };
    let deltas = Tensor::stack(
        &[
            delta(&l)?,
            delta(&cx)?,
            delta(&r)?,
            delta(&t)?,
            delta(&cy)?,
            delta(&b)?,
        ],
        D::Minus1,
    )?
    .min(D::Minus1)?;
    let pairs = pair_mask(mask)?;
    let penalized = (deltas + pairs.affine(-INVALID_PAIR, INVALID_PAIR)?)?;
    let nearest = penalized.min(2)?;
    let has_neighbor = pairs.sum(2)?.gt(0.0)?.to_dtype(mask.dtype())?;
    let rows = (mask * has_neighbor)?;
    let sums = (nearest * &rows)?.sum(1)?;
    let counts = rows.sum(1)?.maximum(1.0)?;
    (sums / counts)?.mean_all()
}

/// Per-layout KL of a diagonal Gaussian posterior, summed over slots and
/// latent dims, then averaged over the batch. `mu`, `logvar`: `(B, N, d)`.
pub fn kl_standard_normal(mu: &Tensor, logvar: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let per_dim = ((logvar.exp()? + mu.sqr()?)? - logvar)?.affine(0.5, -0.5)?;
    let per_slot = per_dim.sum(D::Minus1)?;
    (per_slot * mask)?.sum(1)?.mean_all()
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    x.relu()? + tail
}

/// Discriminator loss `-log D(real) - log(1 - D(fake))`, batch mean.
pub fn discriminator_loss(real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
    softplus(&real_logits.neg()?)?.mean_all()? + softplus(fake_logits)?.mean_all()?
}

pub fn generator_loss(fake_logits: &Tensor, mode: GeneratorGanLoss) -> Result<Tensor> {
    match mode {
        GeneratorGanLoss::NonSaturating => softplus(&fake_logits.neg()?)?.mean_all(),
        GeneratorGanLoss::Saturating => softplus(fake_logits)?.neg()?.mean_all(),
    }
}

/// Cross-entropy per position. `logits`: `(..., C)`; `targets`: `(...)` u32.
pub fn cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let max = logits.max_keepdim(D::Minus1)?.detach();
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    let picked = shifted.gather(&targets.unsqueeze(D::Minus1)?, D::Minus1)?;
    (lse - picked)?.squeeze(D::Minus1)
}

/// Text reconstruction inputs for a batch.
pub struct TextTargets<'a> {
    /// `(B, N, L)` u32 character targets.
    pub chars: &'a Tensor,
    /// `(B, N, L)` 1 where the character target exists.
    pub char_mask: &'a Tensor,
    /// `(B, N)` u32 class ids.
    pub classes: &'a Tensor,
    /// `(B, N)` u32 quantized length levels.
    pub lengths: &'a Tensor,
    /// `(B, N)` 1 for text elements.
    pub text_mask: &'a Tensor,
}

pub struct TextLogits<'a> {
    /// `(B, N, L, V)`
    pub chars: &'a Tensor,
    /// `(B, N, 4)`
    pub classes: &'a Tensor,
    /// `(B, N, 256)`
    pub lengths: &'a Tensor,
}

/// Unweighted per-element `(string, class, length)` cross-entropies, each `(B, N)`.
pub fn text_parts(logits: &TextLogits, targets: &TextTargets) -> Result<[Tensor; 3]> {
    let char_ce = cross_entropy(logits.chars, targets.chars)?;
    let char_count = targets.char_mask.sum(D::Minus1)?.maximum(1.0)?;
    let string = ((char_ce * targets.char_mask)?.sum(D::Minus1)? / char_count)?;
    let class = cross_entropy(logits.classes, targets.classes)?;
    let length = cross_entropy(logits.lengths, targets.lengths)?;
    Ok([string, class, length])
}

/// Weighted text reconstruction loss, averaged over the text elements of each
/// layout and then over the batch.
pub fn text_rec(
    logits: &TextLogits,
    targets: &TextTargets,
    lambda_str: f64,
    lambda_cls: f64,
    lambda_len: f64,
) -> Result<Tensor> {
    let [string, class, length] = text_parts(logits, targets)?;
    let per_element =
        ((string.affine(lambda_str, 0.0)? + class.affine(lambda_cls, 0.0)?)?
            + length.affine(lambda_len, 0.0)?)?;
    masked_layout_mean(&per_element, targets.text_mask)
}

/// Weighted sum of per-element L2 distances. `pred`, `target`: `(K, P)`;
/// `weights`: `(K)` giving each element `1 / (images in its layout * B)`.
pub fn image_rec(pred: &Tensor, target: &Tensor, weights: &Tensor) -> Result<Tensor> {
    if pred.dim(0)? == 0 {
        return Tensor::zeros((), pred.dtype(), pred.device());
    }
    let dist = safe_sqrt(&(pred - target)?.sqr()?.sum(D::Minus1)?)?;
    (dist * weights)?.sum_all()
}

/// Mean over the batch of the L2 distance between flattened backgrounds `(B, P)`.
pub fn background_rec(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    safe_sqrt(&(pred - target)?.sqr()?.sum(D::Minus1)?)?.mean_all()
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    t.to_dtype(DType::F64)?.to_scalar::<f64>()
}
