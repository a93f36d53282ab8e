//! Foreground and background tokenization.
//!
//! Text elements become `[string | class | length]` embeddings, image elements
//! are encoded by the same patch encoder as the background and mean-pooled, and
//! every foreground token is prefixed with its own noise vector.

use candle_core::{DType, Device, Tensor};
use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::elements::{BackgroundImage, ForegroundElement, ForegroundSet, ImageElement, TextClass};
use crate::error::{Error, Result};
use crate::nn::{Ctx, Embedding, EncoderLayer, Linear, ParamBuilder};

/// Number of text length levels.
pub const LENGTH_LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub token_dim: usize,
    pub noise_dim: usize,
    pub text_string_dim: usize,
    pub class_dim: usize,
    pub length_dim: usize,
    pub patch_dim: usize,
    pub background_patch_size: usize,
    pub working_resolution: usize,
    /// Foreground image patches are resized to this square size before encoding.
    pub foreground_patch_resolution: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            token_dim: 128,
            noise_dim: 32,
            text_string_dim: 64,
            class_dim: 16,
            length_dim: 16,
            patch_dim: 96,
            background_patch_size: 16,
            working_resolution: 256,
            foreground_patch_resolution: 32,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.token_dim,
            self.noise_dim,
            self.text_string_dim,
            self.class_dim,
            self.length_dim,
            self.patch_dim,
            self.background_patch_size,
            self.working_resolution,
            self.foreground_patch_resolution,
        ];
        if dims.contains(&0) {
            return Err(Error::config("embedder dimensions must be positive"));
        }
        if self.noise_dim + self.text_string_dim + self.class_dim + self.length_dim != self.token_dim {
            return Err(Error::config(format!(
                "noise_dim + text_string_dim + class_dim + length_dim must equal token_dim {}",
                self.token_dim
            )));
        }
        if self.noise_dim + self.patch_dim != self.token_dim {
            return Err(Error::config(format!(
                "noise_dim + patch_dim must equal token_dim {}",
                self.token_dim
            )));
        }
        for res in [self.working_resolution, self.foreground_patch_resolution] {
            if res % self.background_patch_size != 0 {
                return Err(Error::config(format!(
                    "resolution {res} is not divisible by patch size {}",
                    self.background_patch_size
                )));
            }
        }
        Ok(())
    }

    /// Width of the modality part of a token (everything but the noise).
    pub fn content_dim(&self) -> usize {
        self.token_dim - self.noise_dim
    }

    pub fn background_tokens(&self) -> usize {
        (self.working_resolution / self.background_patch_size).pow(2)
    }

    pub fn foreground_patch_tokens(&self) -> usize {
        (self.foreground_patch_resolution / self.background_patch_size).pow(2)
    }

    pub fn patch_vector_len(&self) -> usize {
        self.background_patch_size * self.background_patch_size * 3
    }
}

/// Clamps a character count into one of the 256 length levels.
pub fn quantize_text_length(length: i64) -> Result<u32> {
    if length < 0 {
        return Err(Error::validation(format!("negative text length {length}")));
    }
    Ok(length.min(LENGTH_LEVELS as i64 - 1) as u32)
}

/// Maps a text string to a fixed-size vector.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, s: &str) -> Vec<f32>;
}

/// Deterministic character n-gram (n = 1..=3) feature hashing, L2-normalized.
/// Case-sensitive; the empty string maps to the zero vector.
#[derive(Debug, Clone, Copy)]
pub struct HashingTextEncoder {
    dim: usize,
}

impl HashingTextEncoder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl TextEncoder for HashingTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, s: &str) -> Vec<f32> {
        let chars: Vec<char> = s.chars().collect();
        let mut v = vec![0f64; self.dim];
        for n in 1..=3 {
            for gram in chars.windows(n) {
                let bytes = gram
                    .iter()
                    .flat_map(|c| (*c as u32).to_le_bytes())
                    .chain(std::iter::once(n as u8));
                let h = fnv1a(bytes);
                let bucket = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
                v[bucket] += sign;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v.into_iter().map(|x| x as f32).collect()
    }
}

/// String embedding with the built-in hashing encoder.
pub fn embed_text_string(s: &str, config: &EmbedderConfig) -> Vec<f32> {
    HashingTextEncoder::new(config.text_string_dim).encode(s)
}

/// Resizes to a `resolution` square and splits into flattened channel-last
/// patches in `[0, 1]`, row-major over the patch grid.
pub fn patchify(img: &RgbImage, resolution: usize, patch: usize) -> Vec<f32> {
    let resized = imageops::resize(img, resolution as u32, resolution as u32, FilterType::Triangle);
    let grid = resolution / patch;
    let mut out = Vec::with_capacity(resolution * resolution * 3);
    for gy in 0..grid {
        for gx in 0..grid {
            for y in 0..patch {
                for x in 0..patch {
                    let p = resized.get_pixel((gx * patch + x) as u32, (gy * patch + y) as u32);
                    out.extend(p.0.iter().map(|&c| c as f32 / 255.0));
                }
            }
        }
    }
    out
}

/// Resizes to `resolution` and flattens channel-first into `[0, 1]`.
pub fn image_to_planar(img: &RgbImage, resolution: usize) -> Vec<f32> {
    let resized = imageops::resize(img, resolution as u32, resolution as u32, FilterType::Triangle);
    let mut out = vec![0f32; 3 * resolution * resolution];
    for (x, y, p) in resized.enumerate_pixels() {
        for c in 0..3 {
            out[c * resolution * resolution + y as usize * resolution + x as usize] =
                p.0[c] as f32 / 255.0;
        }
    }
    out
}

/// Fixed 2D sinusoidal position codes for a `grid × grid` token map, `(grid², dim)`.
pub fn sinusoidal_positions(grid: usize, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = vec![0f32; grid * grid * dim];
    for gy in 0..grid {
        for gx in 0..grid {
            let row = &mut out[(gy * grid + gx) * dim..][..dim];
            for (axis, pos) in [(0, gy), (1, gx)] {
                let part = &mut row[axis * half..(axis + 1) * half];
                for (k, slot) in part.iter_mut().enumerate() {
                    let freq = 10_000f64.powf(-2.0 * (k / 2) as f64 / half as f64);
                    let angle = pos as f64 * freq;
                    *slot = if k % 2 == 0 { angle.sin() } else { angle.cos() } as f32;
                }
            }
        }
    }
    out
}

/// Background encoder output.
#[derive(Debug, Clone)]
pub struct BackgroundTokens {
    /// `(B, T, D)`
    pub tokens: Tensor,
}

impl BackgroundTokens {
    pub fn len(&self) -> usize {
        self.tokens.dim(1).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundToken {
    pub vector: Vec<f32>,
    pub modality: Modality,
    pub element_index: usize,
}

/// Learnable conditioning encoder: background patch transformer, class and
/// length dictionaries, and the pooled image-patch projection.
#[derive(Debug, Clone)]
pub struct Conditioner {
    config: EmbedderConfig,
    patch_proj: Linear,
    encoder: Vec<EncoderLayer>,
    bg_positions: Tensor,
    fg_positions: Tensor,
    class_dict: Embedding,
    length_dict: Embedding,
    patch_head: Linear,
}

impl Conditioner {
    pub fn new(
        pb: &mut ParamBuilder,
        config: &EmbedderConfig,
        model_dim: usize,
        heads: usize,
        depth: usize,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        config.validate()?;
        let bg_grid = config.working_resolution / config.background_patch_size;
        let fg_grid = config.foreground_patch_resolution / config.background_patch_size;
        let positions = |grid: usize| -> Result<Tensor> {
            Ok(Tensor::from_vec(
                sinusoidal_positions(grid, model_dim),
                (grid * grid, model_dim),
                device,
            )?
            .to_dtype(dtype)?)
        };
        Ok(Self {
            config: *config,
            patch_proj: Linear::new(pb, "patch_proj", config.patch_vector_len(), model_dim)?,
            encoder: (0..depth)
                .map(|i| EncoderLayer::new(pb, &format!("encoder.{i}"), model_dim, heads))
                .collect::<candle_core::Result<_>>()?,
            bg_positions: positions(bg_grid)?,
            fg_positions: positions(fg_grid)?,
            class_dict: Embedding::new(pb, "class_dict", TextClass::ALL.len(), config.class_dim, 1.0)?,
            length_dict: Embedding::new(pb, "length_dict", LENGTH_LEVELS, config.length_dim, 1.0)?,
            patch_head: Linear::new(pb, "patch_head", model_dim, config.patch_dim)?,
        })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn class_dictionary(&self) -> &Tensor {
        self.class_dict.table()
    }

    fn encode_grid(&self, patches: &Tensor, positions: Option<&Tensor>, ctx: &Ctx) -> Result<Tensor> {
        let mut x = self.patch_proj.forward(patches)?;
        if let Some(pos) = positions {
            x = x.broadcast_add(pos)?;
        }
        for layer in &self.encoder {
            x = layer.forward(&x, None, ctx)?;
        }
        Ok(x)
    }

    /// Encodes patchified backgrounds `(B, T, p·p·3)`.
    pub fn encode_background_patches(&self, patches: &Tensor, ctx: &Ctx) -> Result<BackgroundTokens> {
        Ok(BackgroundTokens {
            tokens: self.encode_grid(patches, Some(&self.bg_positions), ctx)?,
        })
    }

    /// Same encoder without positional codes; only used to show they matter.
    pub fn encode_background_unpositioned(&self, patches: &Tensor) -> Result<Tensor> {
        self.encode_grid(patches, None, &Ctx::eval())
    }

    pub fn encode_background(&self, bg: &BackgroundImage) -> Result<BackgroundTokens> {
        let cfg = &self.config;
        let patches = patchify(bg.pixels(), cfg.working_resolution, cfg.background_patch_size);
        let t = Tensor::from_vec(
            patches,
            (1, cfg.background_tokens(), cfg.patch_vector_len()),
            self.bg_positions.device(),
        )?
        .to_dtype(self.bg_positions.dtype())?;
        self.encode_background_patches(&t, &Ctx::eval())
    }

    /// Pooled embeddings `(K, patch_dim)` of patchified foreground images
    /// `(K, Tp, p·p·3)`.
    pub fn embed_image_patches(&self, patches: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let tokens = self.encode_grid(patches, Some(&self.fg_positions), ctx)?;
        Ok(self.patch_head.forward(&tokens.mean(1)?)?)
    }

    pub fn embed_image_patch(&self, element: &ImageElement) -> Result<Tensor> {
        let cfg = &self.config;
        let patches = patchify(
            element.patch(),
            cfg.foreground_patch_resolution,
            cfg.background_patch_size,
        );
        let t = Tensor::from_vec(
            patches,
            (1, cfg.foreground_patch_tokens(), cfg.patch_vector_len()),
            self.fg_positions.device(),
        )?
        .to_dtype(self.fg_positions.dtype())?;
        Ok(self.embed_image_patches(&t, &Ctx::eval())?.squeeze(0)?)
    }

    pub fn embed_text_class(&self, class: TextClass) -> Result<Tensor> {
        Ok(self.class_dict.first(class.index() + 1)?.narrow(0, class.index(), 1)?.squeeze(0)?)
    }

    /// `[string | class | length]` for every slot: `strings` `(B, N, S)`,
    /// `classes` and `levels` `(B, N)` u32.
    pub fn text_embeddings(&self, strings: &Tensor, classes: &Tensor, levels: &Tensor) -> Result<Tensor> {
        Ok(Tensor::cat(
            &[
                strings.clone(),
                self.class_dict.forward(classes)?,
                self.length_dict.forward(levels)?,
            ],
            candle_core::D::Minus1,
        )?)
    }

    /// Concatenates noise with modality content. `content` is
    /// `[text rows (B·N); image rows (K)]` and `source` picks one row per slot.
    pub fn assemble_tokens(&self, noise: &Tensor, content: &Tensor, source: &Tensor) -> Result<Tensor> {
        let (b, n, _) = noise.dims3()?;
        let picked = content.index_select(source, 0)?.reshape((b, n, self.config.content_dim()))?;
        Ok(Tensor::cat(&[noise, &picked], candle_core::D::Minus1)?)
    }

    /// Single-sample token assembly with explicit per-element noise.
    pub fn assemble_foreground_tokens(
        &self,
        fg: &ForegroundSet,
        noise: &[Vec<f32>],
        text_encoder: &dyn TextEncoder,
    ) -> Result<Vec<ForegroundToken>> {
        if noise.len() != fg.len() {
            return Err(Error::shape(format!(
                "{} noise vectors for {} elements",
                noise.len(),
                fg.len()
            )));
        }
        let device = self.bg_positions.device();
        let dtype = self.bg_positions.dtype();
        let mut out = Vec::with_capacity(fg.len());
        for (i, (element, z)) in fg.elements.iter().zip(noise).enumerate() {
            if z.len() != self.config.noise_dim {
                return Err(Error::shape(format!(
                    "noise vector {i} has {} entries, expected {}",
                    z.len(),
                    self.config.noise_dim
                )));
            }
            let (content, modality) = match element {
                ForegroundElement::Text(t) => {
                    let s = Tensor::from_vec(text_encoder.encode(&t.string), (1, 1, text_encoder.dim()), device)?
                        .to_dtype(dtype)?;
                    let c = Tensor::new(&[[t.class.index() as u32]], device)?;
                    let l = Tensor::new(&[[quantize_text_length(t.length() as i64)?]], device)?;
                    (self.text_embeddings(&s, &c, &l)?.flatten_all()?, Modality::Text)
                }
                ForegroundElement::Image(img) => (self.embed_image_patch(img)?, Modality::Image),
            };
            let mut vector = z.clone();
            vector.extend(content.to_dtype(DType::F32)?.to_vec1::<f32>()?);
            out.push(ForegroundToken {
                vector,
                modality,
                element_index: i,
            });
        }
        Ok(out)
    }
}
