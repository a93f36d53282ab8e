//! The seven networks: generator G, conditional and unconditional
//! discriminators D^c / D^u, their auxiliary decoders F^c / F^u, the latent
//! encoder E and the generator-side reconstructor R.
//!
//! All modules work on padded batches (see [`crate::batch::Batch`]); padding
//! is masked out of attention and pooling so it never changes real outputs.

use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::charset;
use crate::conditioning::{BackgroundTokens, Conditioner, EmbedderConfig, LENGTH_LEVELS};
use crate::elements::TextClass;
use crate::error::{Error, Result};
use crate::nn::{
    causal_bias, key_padding_bias, masked_mean_pool, Ctx, DecoderLayer, Embedding, EncoderLayer,
    LayerNorm, Linear, Mlp, ParamBuilder, ParamStore,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub model_dim: usize,
    pub num_heads: usize,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    pub dropout: f64,
    /// Length of the learned positional embeddings.
    pub max_elements: usize,
    pub max_chars: usize,
    pub background_reconstruction_resolution: usize,
    /// Resolution at which foreground patches are compared.
    pub patch_reconstruction_resolution: usize,
    /// Resolution the patch heads decode at before bilinear upsampling.
    pub patch_decoder_resolution: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            model_dim: 128,
            num_heads: 4,
            encoder_depth: 2,
            decoder_depth: 2,
            dropout: 0.1,
            max_elements: 16,
            max_chars: 32,
            background_reconstruction_resolution: 16,
            patch_reconstruction_resolution: 64,
            patch_decoder_resolution: 16,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.model_dim,
            self.num_heads,
            self.encoder_depth,
            self.decoder_depth,
            self.max_elements,
            self.max_chars,
            self.background_reconstruction_resolution,
            self.patch_reconstruction_resolution,
            self.patch_decoder_resolution,
        ];
        if positive.contains(&0) {
            return Err(Error::config("network sizes must be positive"));
        }
        if self.model_dim % self.num_heads != 0 {
            return Err(Error::config(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.model_dim % 2 != 0 {
            return Err(Error::config("model_dim must be even for sinusoidal positions"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Bilinear resampling matrix `(out, in)` with half-pixel centers.
pub fn bilinear_matrix(input: usize, output: usize) -> Vec<f64> {
    let mut m = vec![0.0; output * input];
    let scale = input as f64 / output as f64;
    for i in 0..output {
        let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(input - 1);
        let t = src - lo as f64;
        m[i * input + lo] += 1.0 - t;
        m[i * input + hi] += t;
    }
    m
}

/// `mu + exp(logvar / 2) * z0`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, z0: &Tensor) -> Result<Tensor> {
    Ok((mu + (logvar.affine(0.5, 0.0)?.exp()? * z0)?)?)
}

fn sigmoid(x: &Tensor) -> candle_core::Result<Tensor> {
    (x.neg()?.exp()? + 1.0)?.recip()
}

fn layers<T>(n: usize, f: impl FnMut(usize) -> candle_core::Result<T>) -> Result<Vec<T>> {
    Ok((0..n).map(f).collect::<candle_core::Result<_>>()?)
}

/// Boxes plus the last-layer features that feed R.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// `(B, N, 4)` in `(0, 1)`
    pub boxes: Tensor,
    /// `(B, N, D)`
    pub features: Tensor,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorOutput {
    /// `(B)` raw logits
    pub logits: Tensor,
    /// `(B, N, D)` per-box features
    pub features: Tensor,
}

#[derive(Debug, Clone)]
pub struct LatentPosterior {
    /// `(B, N, noise_dim)`
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// Text, class, length and patch logits for every slot.
#[derive(Debug, Clone)]
pub struct ForegroundReconstruction {
    /// `(B, N, L, V)`
    pub chars: Tensor,
    /// `(B, N, 4)`
    pub classes: Tensor,
    /// `(B, N, 256)`
    pub lengths: Tensor,
    /// `(K, 3·r²)` in `[0, 1]` for the image slots, if any.
    pub patches: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct CondReconstruction {
    pub boxes: Tensor,
    /// `(B, 3·r²)`
    pub background: Tensor,
    pub foreground: ForegroundReconstruction,
}

/// Modality embedding of every slot, `(B, N, content_dim)`.
fn foreground_content(cond: &Conditioner, batch: &Batch, ctx: &Ctx) -> Result<Tensor> {
    let text = cond.text_embeddings(&batch.text_strings, &batch.text_classes, &batch.text_levels)?;
    let c = cond.config().content_dim();
    let text_rows = text.reshape((batch.size * batch.slots, c))?;
    let rows = match &batch.image_patches {
        Some(p) => Tensor::cat(&[&text_rows, &cond.embed_image_patches(p, ctx)?], 0)?,
        None => text_rows,
    };
    Ok(rows
        .index_select(&batch.content_source, 0)?
        .reshape((batch.size, batch.slots, c))?)
}

#[derive(Debug, Clone)]
pub struct Generator {
    cond: Conditioner,
    input: Linear,
    layers: Vec<DecoderLayer>,
    norm: LayerNorm,
    box_head: Mlp,
}

impl Generator {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig, emb: &EmbedderConfig, device: &Device, dtype: DType) -> Result<Self> {
        let mut pb = pb.pp("generator");
        let d = net.model_dim;
        Ok(Self {
            cond: Conditioner::new(&mut pb.pp("cond"), emb, d, net.num_heads, net.encoder_depth, device, dtype)?,
            input: Linear::new(&mut pb, "input", emb.token_dim, d)?,
            layers: layers(net.decoder_depth, |i| DecoderLayer::new(&mut pb, &format!("decoder.{i}"), d, net.num_heads))?,
            norm: LayerNorm::new(&mut pb, "norm", d)?,
            box_head: Mlp::new(&mut pb, "box_head", &[d, d, 4])?,
        })
    }

    pub fn conditioner(&self) -> &Conditioner {
        &self.cond
    }

    pub fn encode_background(&self, batch: &Batch, ctx: &Ctx) -> Result<BackgroundTokens> {
        self.cond.encode_background_patches(&batch.bg_patches, ctx)
    }

    /// Modality part of every foreground token, `(B, N, token_dim - noise_dim)`.
    pub fn content(&self, batch: &Batch, ctx: &Ctx) -> Result<Tensor> {
        foreground_content(&self.cond, batch, ctx)
    }

    /// Foreground tokens `(B, N, token_dim)` for the given per-slot noise.
    pub fn foreground_tokens(&self, batch: &Batch, noise: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let content = self.content(batch, ctx)?;
        Ok(Tensor::cat(&[noise, &content], D::Minus1)?)
    }

    /// Decodes foreground tokens against background tokens. Foreground tokens
    /// carry no positional code, so outputs permute with the inputs.
    pub fn decode(&self, bg: &BackgroundTokens, tokens: &Tensor, mask: &Tensor, ctx: &Ctx) -> Result<GeneratorOutput> {
        if tokens.dim(1)? == 0 {
            return Err(Error::validation("generator needs at least one foreground token"));
        }
        let bias = key_padding_bias(mask)?;
        let mut x = self.input.forward(tokens)?;
        for layer in &self.layers {
            x = layer.forward(&x, &bg.tokens, Some(&bias), ctx)?;
        }
        let features = self.norm.forward(&x)?;
        let boxes = sigmoid(&self.box_head.forward(&features)?)?;
        Ok(GeneratorOutput { boxes, features })
    }

    pub fn forward(&self, batch: &Batch, noise: &Tensor, ctx: &Ctx) -> Result<GeneratorOutput> {
        let bg = self.encode_background(batch, ctx)?;
        let tokens = self.foreground_tokens(batch, noise, ctx)?;
        self.decode(&bg, &tokens, &batch.mask, ctx)
    }
}

/// D^c: judges a layout jointly with its background and foreground.
#[derive(Debug, Clone)]
pub struct CondDiscriminator {
    cond: Conditioner,
    box_proj: Linear,
    content_proj: Linear,
    layers: Vec<DecoderLayer>,
    norm: LayerNorm,
    head: Linear,
}

impl CondDiscriminator {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig, emb: &EmbedderConfig, device: &Device, dtype: DType) -> Result<Self> {
        let mut pb = pb.pp("cond_disc");
        let d = net.model_dim;
        Ok(Self {
            cond: Conditioner::new(&mut pb.pp("cond"), emb, d, net.num_heads, net.encoder_depth, device, dtype)?,
            box_proj: Linear::new(&mut pb, "box_proj", 4, d)?,
            content_proj: Linear::new(&mut pb, "content_proj", emb.content_dim(), d)?,
            layers: layers(net.decoder_depth, |i| DecoderLayer::new(&mut pb, &format!("decoder.{i}"), d, net.num_heads))?,
            norm: LayerNorm::new(&mut pb, "norm", d)?,
            head: Linear::new(&mut pb, "head", d, 1)?,
        })
    }

    /// Background tokens and foreground content do not depend on the layout,
    /// so callers scoring real and fake layouts compute them once.
    pub fn condition(&self, batch: &Batch, ctx: &Ctx) -> Result<(BackgroundTokens, Tensor)> {
        let bg = self.cond.encode_background_patches(&batch.bg_patches, ctx)?;
        let content = self.content_proj.forward(&foreground_content(&self.cond, batch, ctx)?)?;
        Ok((bg, content))
    }

    pub fn score(&self, boxes: &Tensor, condition: &(BackgroundTokens, Tensor), mask: &Tensor, ctx: &Ctx) -> Result<DiscriminatorOutput> {
        let (bg, content) = condition;
        if boxes.dims()[..2] != content.dims()[..2] {
            return Err(Error::shape(format!(
                "layout {:?} does not match foreground {:?}",
                boxes.dims(),
                content.dims()
            )));
        }
        let bias = key_padding_bias(mask)?;
        let mut x = (self.box_proj.forward(boxes)? + content)?;
        for layer in &self.layers {
            x = layer.forward(&x, &bg.tokens, Some(&bias), ctx)?;
        }
        let features = self.norm.forward(&x)?;
        let logits = self.head.forward(&masked_mean_pool(&features, mask)?)?.squeeze(D::Minus1)?;
        Ok(DiscriminatorOutput { logits, features })
    }

    pub fn forward(&self, boxes: &Tensor, batch: &Batch, ctx: &Ctx) -> Result<DiscriminatorOutput> {
        let condition = self.condition(batch, ctx)?;
        self.score(boxes, &condition, &batch.mask, ctx)
    }
}

/// D^u: judges box parameters alone.
#[derive(Debug, Clone)]
pub struct UncondDiscriminator {
    box_proj: Linear,
    layers: Vec<EncoderLayer>,
    norm: LayerNorm,
    head: Linear,
}

impl UncondDiscriminator {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig) -> Result<Self> {
        let mut pb = pb.pp("uncond_disc");
        let d = net.model_dim;
        Ok(Self {
            box_proj: Linear::new(&mut pb, "box_proj", 4, d)?,
            layers: layers(net.encoder_depth, |i| EncoderLayer::new(&mut pb, &format!("encoder.{i}"), d, net.num_heads))?,
            norm: LayerNorm::new(&mut pb, "norm", d)?,
            head: Linear::new(&mut pb, "head", d, 1)?,
        })
    }

    pub fn forward(&self, boxes: &Tensor, mask: &Tensor, ctx: &Ctx) -> Result<DiscriminatorOutput> {
        let bias = key_padding_bias(mask)?;
        let mut x = self.box_proj.forward(boxes)?;
        for layer in &self.layers {
            x = layer.forward(&x, Some(&bias), ctx)?;
        }
        let features = self.norm.forward(&x)?;
        let logits = self.head.forward(&masked_mean_pool(&features, mask)?)?.squeeze(D::Minus1)?;
        Ok(DiscriminatorOutput { logits, features })
    }
}

/// Autoregressive character decoder conditioned on one feature vector per element.
#[derive(Debug, Clone)]
struct CharDecoder {
    embed: Embedding,
    pos: Embedding,
    cond: Linear,
    layer: EncoderLayer,
    norm: LayerNorm,
    out: Linear,
    max_chars: usize,
}

impl CharDecoder {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig) -> Result<Self> {
        let mut pb = pb.pp("chars");
        let d = net.model_dim;
        Ok(Self {
            embed: Embedding::new(&mut pb, "embed", charset::VOCAB_SIZE, d, 0.02)?,
            pos: Embedding::new(&mut pb, "pos", net.max_chars, d, 0.02)?,
            cond: Linear::new(&mut pb, "cond", d, d)?,
            layer: EncoderLayer::new(&mut pb, "layer", d, net.num_heads)?,
            norm: LayerNorm::new(&mut pb, "norm", d)?,
            out: Linear::new(&mut pb, "out", d, charset::VOCAB_SIZE)?,
            max_chars: net.max_chars,
        })
    }

    /// `features`: `(B, N, D)`; `inputs`: `(B, N, L)` teacher-forcing ids.
    fn forward(&self, features: &Tensor, inputs: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let (b, n, d) = features.dims3()?;
        let l = inputs.dim(2)?.min(self.max_chars);
        let inputs = inputs.narrow(2, 0, l)?.reshape((b * n, l))?;
        let cond = self.cond.forward(&features.reshape((b * n, 1, d))?)?;
        let x = self
            .embed
            .forward(&inputs)?
            .broadcast_add(&self.pos.first(l)?)?
            .broadcast_add(&cond)?;
        let bias = causal_bias(l, x.dtype(), x.device())?;
        let x = self.layer.forward(&x, Some(&bias), ctx)?;
        let logits = self.out.forward(&self.norm.forward(&x)?)?;
        Ok(logits.reshape((b, n, l, charset::VOCAB_SIZE))?)
    }
}

/// Per-element text and patch heads shared by F^c and R.
#[derive(Debug, Clone)]
struct ForegroundHeads {
    class: Mlp,
    length: Mlp,
    chars: CharDecoder,
    patch: Linear,
    upsample: Tensor,
    upsample_t: Tensor,
    patch_res: usize,
}

impl ForegroundHeads {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig, device: &Device, dtype: DType) -> Result<Self> {
        let d = net.model_dim;
        let r = net.patch_decoder_resolution;
        let up = Tensor::from_vec(
            bilinear_matrix(r, net.patch_reconstruction_resolution),
            (net.patch_reconstruction_resolution, r),
            device,
        )?
        .to_dtype(dtype)?;
        Ok(Self {
            class: Mlp::new(pb, "class_head", &[d, d, d, TextClass::ALL.len()])?,
            length: Mlp::new(pb, "length_head", &[d, d, d, LENGTH_LEVELS])?,
            chars: CharDecoder::new(pb, net)?,
            patch: Linear::new(pb, "patch_head", d, 3 * r * r)?,
            upsample_t: up.t()?.contiguous()?,
            upsample: up,
            patch_res: r,
        })
    }

    fn forward(&self, features: &Tensor, batch: &Batch, ctx: &Ctx) -> Result<ForegroundReconstruction> {
        let patches = match &batch.image_slots {
            Some(slots) => {
                let (b, n, d) = features.dims3()?;
                let picked = features.reshape((b * n, d))?.index_select(slots, 0)?;
                let k = picked.dim(0)?;
                let r = self.patch_res;
                let small = sigmoid(&self.patch.forward(&picked)?)?.reshape((k, 3, r, r))?;
                let big = self
                    .upsample
                    .broadcast_matmul(&small)?
                    .broadcast_matmul(&self.upsample_t)?;
                Some(big.reshape((k, ()))?)
            }
            None => None,
        };
        Ok(ForegroundReconstruction {
            chars: self.chars.forward(features, &batch.char_inputs, ctx)?,
            classes: self.class.forward(features)?,
            lengths: self.length.forward(features)?,
            patches,
        })
    }
}

/// F^c: reconstructs the layout, background and foreground from D^c features.
#[derive(Debug, Clone)]
pub struct AuxDecoderCond {
    pos: Embedding,
    layer: EncoderLayer,
    norm: LayerNorm,
    box_head: Mlp,
    background: Linear,
    heads: ForegroundHeads,
}

impl AuxDecoderCond {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig, device: &Device, dtype: DType) -> Result<Self> {
        let mut pb = pb.pp("aux_cond");
        let d = net.model_dim;
        let r = net.background_reconstruction_resolution;
        Ok(Self {
            pos: Embedding::new(&mut pb, "pos", net.max_elements, d, 0.02)?,
            layer: EncoderLayer::new(&mut pb, "layer", d, net.num_heads)?,
            norm: LayerNorm::new(&mut pb, "norm", d)?,
            box_head: Mlp::new(&mut pb, "box_head", &[d, d, 4])?,
            background: Linear::new(&mut pb, "background_head", d, 3 * r * r)?,
            heads: ForegroundHeads::new(&mut pb, net, device, dtype)?,
        })
    }

    pub fn positional_embeddings(&self) -> &Tensor {
        self.pos.table()
    }

    pub fn forward(&self, features: &Tensor, batch: &Batch, ctx: &Ctx) -> Result<CondReconstruction> {
        let n = features.dim(1)?;
        if n > self.pos.rows() {
            return Err(Error::shape(format!("{n} features exceed {} positions", self.pos.rows())));
        }
        let x = features.broadcast_add(&self.pos.first(n)?)?;
        let x = self.layer.forward(&x, Some(&key_padding_bias(&batch.mask)?), ctx)?;
        let h = self.norm.forward(&x)?;
        Ok(CondReconstruction {
            boxes: sigmoid(&self.box_head.forward(&h)?)?,
            background: sigmoid(&self.background.forward(&masked_mean_pool(&h, &batch.mask)?)?)?,
            foreground: self.heads.forward(&h, batch, ctx)?,
        })
    }
}

/// F^u: reconstructs the layout from D^u features.
#[derive(Debug, Clone)]
pub struct AuxDecoderUncond {
    pos: Embedding,
    layer: EncoderLayer,
    norm: LayerNorm,
    box_head: Mlp,
}

impl AuxDecoderUncond {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig) -> Result<Self> {
        let mut pb = pb.pp("aux_uncond");
        let d = net.model_dim;
        Ok(Self {
            pos: Embedding::new(&mut pb, "pos", net.max_elements, d, 0.02)?,
            layer: EncoderLayer::new(&mut pb, "layer", d, net.num_heads)?,
            norm: LayerNorm::new(&mut pb, "norm", d)?,
            box_head: Mlp::new(&mut pb, "box_head", &[d, d, 4])?,
        })
    }

    pub fn positional_embeddings(&self) -> &Tensor {
        self.pos.table()
    }

    pub fn forward(&self, features: &Tensor, mask: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let n = features.dim(1)?;
        if n > self.pos.rows() {
            return Err(Error::shape(format!("{n} features exceed {} positions", self.pos.rows())));
        }
        let x = features.broadcast_add(&self.pos.first(n)?)?;
        let x = self.layer.forward(&x, Some(&key_padding_bias(mask)?), ctx)?;
        Ok(sigmoid(&self.box_head.forward(&self.norm.forward(&x)?)?)?)
    }
}

/// E: per-slot diagonal Gaussian posterior over the generator noise.
#[derive(Debug, Clone)]
pub struct LatentEncoder {
    box_proj: Linear,
    layers: Vec<EncoderLayer>,
    norm: LayerNorm,
    head: Linear,
    latent: usize,
}

impl LatentEncoder {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig, latent: usize) -> Result<Self> {
        let mut pb = pb.pp("latent_encoder");
        let d = net.model_dim;
        Ok(Self {
            box_proj: Linear::new(&mut pb, "box_proj", 4, d)?,
            layers: layers(net.encoder_depth, |i| EncoderLayer::new(&mut pb, &format!("encoder.{i}"), d, net.num_heads))?,
            norm: LayerNorm::new(&mut pb, "norm", d)?,
            head: Linear::new(&mut pb, "head", d, 2 * latent)?,
            latent,
        })
    }

    pub fn forward(&self, boxes: &Tensor, mask: &Tensor, ctx: &Ctx) -> Result<LatentPosterior> {
        let bias = key_padding_bias(mask)?;
        let mut x = self.box_proj.forward(boxes)?;
        for layer in &self.layers {
            x = layer.forward(&x, Some(&bias), ctx)?;
        }
        let out = self.head.forward(&self.norm.forward(&x)?)?;
        Ok(LatentPosterior {
            mu: out.narrow(D::Minus1, 0, self.latent)?,
            logvar: out.narrow(D::Minus1, self.latent, self.latent)?,
        })
    }
}

/// R: reconstructs the foreground conditions from the generator's last features.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    heads: ForegroundHeads,
}

impl Reconstructor {
    fn new(pb: &mut ParamBuilder, net: &NetworkConfig, device: &Device, dtype: DType) -> Result<Self> {
        Ok(Self {
            heads: ForegroundHeads::new(&mut pb.pp("reconstructor"), net, device, dtype)?,
        })
    }

    pub fn forward(&self, features: &Tensor, batch: &Batch, ctx: &Ctx) -> Result<ForegroundReconstruction> {
        self.heads.forward(features, batch, ctx)
    }
}

/// All seven networks. Parameters are split into the generator side (G, E, R)
/// and the discriminator side (D^c, D^u, F^c, F^u) so each optimizer only
/// touches its own half.
#[derive(Debug, Clone)]
pub struct Networks {
    pub generator: Generator,
    pub latent_encoder: LatentEncoder,
    pub reconstructor: Reconstructor,
    pub cond_disc: CondDiscriminator,
    pub uncond_disc: UncondDiscriminator,
    pub aux_cond: AuxDecoderCond,
    pub aux_uncond: AuxDecoderUncond,
    pub net_config: NetworkConfig,
    pub emb_config: EmbedderConfig,
}

#[derive(Debug, Clone)]
pub struct ParamSets {
    pub generator: ParamStore,
    pub discriminator: ParamStore,
}

impl ParamSets {
    pub fn parameter_count(&self) -> usize {
        self.generator.parameter_count() + self.discriminator.parameter_count()
    }
}

impl Networks {
    pub fn new(
        net: &NetworkConfig,
        emb: &EmbedderConfig,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<(Self, ParamSets)> {
        net.validate()?;
        emb.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = ParamStore::new(dtype, device.clone());
        let mut disc = ParamStore::new(dtype, device.clone());
        let (generator, latent_encoder, reconstructor) = {
            let mut pb = ParamBuilder::new(&mut gen, &mut rng);
            (
                Generator::new(&mut pb, net, emb, device, dtype)?,
                LatentEncoder::new(&mut pb, net, emb.noise_dim)?,
                Reconstructor::new(&mut pb, net, device, dtype)?,
            )
        };
        let (cond_disc, uncond_disc, aux_cond, aux_uncond) = {
            let mut pb = ParamBuilder::new(&mut disc, &mut rng);
            (
                CondDiscriminator::new(&mut pb, net, emb, device, dtype)?,
                UncondDiscriminator::new(&mut pb, net)?,
                AuxDecoderCond::new(&mut pb, net, device, dtype)?,
                AuxDecoderUncond::new(&mut pb, net)?,
            )
        };
        Ok((
            Self {
                generator,
                latent_encoder,
                reconstructor,
                cond_disc,
                uncond_disc,
                aux_cond,
                aux_uncond,
                net_config: *net,
                emb_config: *emb,
            },
            ParamSets {
                generator: gen,
                discriminator: disc,
            },
        ))
    }
}
