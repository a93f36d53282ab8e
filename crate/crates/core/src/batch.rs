//! Converts design samples into padded, masked tensors.

use candle_core::{DType, Device, Tensor};

use crate::charset;
use crate::conditioning::{image_to_planar, patchify, quantize_text_length, EmbedderConfig, TextEncoder};
use crate::elements::{BackgroundImage, DesignSample, ForegroundElement, ForegroundSet};
use crate::error::{Error, Result};
use crate::geometry::Layout;
use crate::networks::NetworkConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum PreparedElement {
    Text {
        string: Vec<f32>,
        class: u32,
        level: u32,
        char_inputs: Vec<u32>,
        char_targets: Vec<u32>,
    },
    Image {
        patches: Vec<f32>,
        /// Planar `3 × r × r` reconstruction target.
        target: Vec<f32>,
    },
}

/// Everything a training or inference step needs from one sample, with image
/// preprocessing done once up front.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub bg_patches: Vec<f32>,
    pub bg_target: Vec<f32>,
    pub elements: Vec<PreparedElement>,
    /// Ground truth, absent at inference time.
    pub boxes: Option<Vec<[f64; 4]>>,
}

impl PreparedSample {
    pub fn from_inputs(
        id: impl Into<String>,
        background: &BackgroundImage,
        foreground: &ForegroundSet,
        layout: Option<&Layout>,
        emb: &EmbedderConfig,
        net: &NetworkConfig,
        text_encoder: &dyn TextEncoder,
    ) -> Result<Self> {
        if foreground.is_empty() {
            return Err(Error::validation("foreground set is empty"));
        }
        if text_encoder.dim() != emb.text_string_dim {
            return Err(Error::config(format!(
                "text encoder produces {} values, text_string_dim is {}",
                text_encoder.dim(),
                emb.text_string_dim
            )));
        }
        let elements = foreground
            .elements
            .iter()
            .map(|e| {
                Ok(match e {
                    ForegroundElement::Text(t) => PreparedElement::Text {
                        string: text_encoder.encode(&t.string),
                        class: t.class.index() as u32,
                        level: quantize_text_length(t.length() as i64)?,
                        char_inputs: charset::encode_inputs(&t.string, net.max_chars),
                        char_targets: charset::encode_targets(&t.string, net.max_chars),
                    },
                    ForegroundElement::Image(img) => PreparedElement::Image {
                        patches: patchify(
                            img.patch(),
                            emb.foreground_patch_resolution,
                            emb.background_patch_size,
                        ),
                        target: image_to_planar(img.patch(), net.patch_reconstruction_resolution),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: id.into(),
            bg_patches: patchify(background.pixels(), emb.working_resolution, emb.background_patch_size),
            bg_target: image_to_planar(background.pixels(), net.background_reconstruction_resolution),
            elements,
            boxes: layout.map(|l| l.to_arrays()),
        })
    }

    pub fn from_sample(
        sample: &DesignSample,
        emb: &EmbedderConfig,
        net: &NetworkConfig,
        text_encoder: &dyn TextEncoder,
    ) -> Result<Self> {
        Self::from_inputs(
            sample.id.clone(),
            &sample.background,
            &sample.foreground,
            Some(&sample.layout),
            emb,
            net,
            text_encoder,
        )
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// A padded batch. Slot `(b, n)` is real iff `mask[b, n] == 1`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub slots: usize,
    pub lengths: Vec<usize>,
    /// `(B, T, p·p·3)`
    pub bg_patches: Tensor,
    /// `(B, 3·r²)`
    pub bg_target: Tensor,
    /// `(B, N, 4)`; zeros where no ground truth exists.
    pub boxes: Tensor,
    pub has_boxes: bool,
    /// `(B, N)` float
    pub mask: Tensor,
    /// `(B, N, S)`
    pub text_strings: Tensor,
    /// `(B, N)` u32
    pub text_classes: Tensor,
    /// `(B, N)` u32
    pub text_levels: Tensor,
    /// `(B, N)` float, 1 for text slots
    pub text_mask: Tensor,
    /// `(B, N, L)` u32
    pub char_inputs: Tensor,
    /// `(B, N, L)` u32
    pub char_targets: Tensor,
    /// `(B, N, L)` float
    pub char_mask: Tensor,
    /// Image elements in batch order, `(K, Tp, p·p·3)`.
    pub image_patches: Option<Tensor>,
    /// `(K, 3·r²)`
    pub image_targets: Option<Tensor>,
    /// Flat slot index `b·N + n` of each image element, `(K)` u32.
    pub image_slots: Option<Tensor>,
    /// `(K)`: `1 / (images in its layout · B)`.
    pub image_weights: Option<Tensor>,
    /// Row of the content matrix `[text rows (B·N); image rows (K)]` per slot, `(B·N)` u32.
    pub content_source: Tensor,
}

impl Batch {
    pub fn collate(samples: &[&PreparedSample], emb: &EmbedderConfig, net: &NetworkConfig, dtype: DType, device: &Device) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        let b = samples.len();
        let n = samples.iter().map(|s| s.len()).max().unwrap_or(0);
        if n == 0 {
            return Err(Error::validation("batch contains an empty foreground set"));
        }
        if n > net.max_elements {
            return Err(Error::validation(format!(
                "{n} elements exceed max_elements {}",
                net.max_elements
            )));
        }
        let l = net.max_chars;
        let s_dim = emb.text_string_dim;
        let t = emb.background_tokens();
        let pv = emb.patch_vector_len();
        let has_boxes = samples.iter().all(|s| s.boxes.is_some());

        let mut bg_patches = Vec::with_capacity(b * t * pv);
        let mut bg_target = Vec::new();
        let mut boxes = vec![0f64; b * n * 4];
        let mut mask = vec![0f64; b * n];
        let mut strings = vec![0f32; b * n * s_dim];
        let mut classes = vec![0u32; b * n];
        let mut levels = vec![0u32; b * n];
        let mut text_mask = vec![0f64; b * n];
        let mut char_inputs = vec![charset::PAD; b * n * l];
        let mut char_targets = vec![charset::PAD; b * n * l];
        let mut char_mask = vec![0f64; b * n * l];
        let mut img_patches = Vec::new();
        let mut img_targets = Vec::new();
        let mut img_slots = Vec::new();
        let mut img_weights = Vec::new();
        let mut source: Vec<u32> = (0..(b * n) as u32).collect();

        for (bi, s) in samples.iter().enumerate() {
            if s.bg_patches.len() != t * pv {
                return Err(Error::shape(format!(
                    "sample {} has {} background values, expected {}",
                    s.id,
                    s.bg_patches.len(),
                    t * pv
                )));
            }
            bg_patches.extend_from_slice(&s.bg_patches);
            bg_target.extend_from_slice(&s.bg_target);
            if let Some(bx) = &s.boxes {
                if bx.len() != s.len() {
                    return Err(Error::shape(format!(
                        "sample {}: {} boxes for {} elements",
                        s.id,
                        bx.len(),
                        s.len()
                    )));
                }
                for (ni, p) in bx.iter().enumerate() {
                    boxes[(bi * n + ni) * 4..][..4].copy_from_slice(p);
                }
            }
            let images_here = s
                .elements
                .iter()
                .filter(|e| matches!(e, PreparedElement::Image { .. }))
                .count();
            for (ni, e) in s.elements.iter().enumerate() {
                let slot = bi * n + ni;
                mask[slot] = 1.0;
                match e {
                    PreparedElement::Text {
                        string,
                        class,
                        level,
                        char_inputs: ci,
                        char_targets: ct,
                    } => {
                        strings[slot * s_dim..][..s_dim].copy_from_slice(string);
                        classes[slot] = *class;
                        levels[slot] = *level;
                        text_mask[slot] = 1.0;
                        for (k, (&i, &tg)) in ci.iter().zip(ct).take(l).enumerate() {
                            char_inputs[slot * l + k] = i;
                            char_targets[slot * l + k] = tg;
                            char_mask[slot * l + k] = 1.0;
                        }
                    }
                    PreparedElement::Image { patches, target } => {
                        source[slot] = (b * n + img_slots.len()) as u32;
                        img_patches.extend_from_slice(patches);
                        img_targets.extend_from_slice(target);
                        img_slots.push(slot as u32);
                        img_weights.push(1.0 / (images_here * b) as f64);
                    }
                }
            }
        }

        let f = |v: Vec<f64>, shape: &[usize]| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?)
        };
        let f32t = |v: Vec<f32>, shape: &[usize]| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?)
        };
        let u = |v: Vec<u32>, shape: &[usize]| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, shape, device)?)
        };
        let k = img_slots.len();
        let bg_len = bg_target.len() / b;
        let (image_patches, image_targets, image_slots, image_weights) = if k == 0 {
            (None, None, None, None)
        } else {
            let tgt_len = img_targets.len() / k;
            (
                Some(f32t(img_patches, &[k, emb.foreground_patch_tokens(), pv])?),
                Some(f32t(img_targets, &[k, tgt_len])?),
                Some(u(img_slots, &[k])?),
                Some(f(img_weights, &[k])?),
            )
        };
        Ok(Self {
            size: b,
            slots: n,
            lengths: samples.iter().map(|s| s.len()).collect(),
            bg_patches: f32t(bg_patches, &[b, t, pv])?,
            bg_target: f32t(bg_target, &[b, bg_len])?,
            boxes: f(boxes, &[b, n, 4])?,
            has_boxes,
            mask: f(mask, &[b, n])?,
            text_strings: f32t(strings, &[b, n, s_dim])?,
            text_classes: u(classes, &[b, n])?,
            text_levels: u(levels, &[b, n])?,
            text_mask: f(text_mask, &[b, n])?,
            char_inputs: u(char_inputs, &[b, n, l])?,
            char_targets: u(char_targets, &[b, n, l])?,
            char_mask: f(char_mask, &[b, n, l])?,
            image_patches,
            image_targets,
            image_slots,
            image_weights,
            content_source: u(source, &[b * n])?,
        })
    }

    /// Converts `(B, N, 4)` box tensors back to per-sample layouts, dropping padding.
    pub fn layouts(&self, boxes: &Tensor) -> Result<Vec<Layout>> {
        let values = boxes.to_dtype(DType::F64)?.to_vec3::<f64>()?;
        Ok(values
            .iter()
            .zip(&self.lengths)
            .map(|(rows, &len)| {
                let arrays: Vec<[f64; 4]> = rows[..len].iter().map(|r| [r[0], r[1], r[2], r[3]]).collect();
                Layout::from_arrays(&arrays)
            })
            .collect())
    }
}
