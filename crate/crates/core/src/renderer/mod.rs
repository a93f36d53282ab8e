//! Deterministic banner composition from a layout.

mod jitter;
mod text;

use std::collections::BTreeMap;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::elements::{BackgroundImage, ForegroundElement, ForegroundSet, TextClass};
use crate::error::{Error, Result};
use crate::geometry::{denormalize_box, Layout, PixelBox};

pub use jitter::{
    alignment_structure, enforce_center_alignment, jitter_layout, jitter_layout_detailed, Jittered, ALIGN_TOL,
};
pub use text::{fit_text_to_box, layout_at, wrap, MonospaceFont, TextFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    Black,
    White,
}

impl Contrast {
    pub fn rgb(self) -> Rgb<u8> {
        match self {
            Contrast::Black => Rgb([0, 0, 0]),
            Contrast::White => Rgb([255, 255, 255]),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Contrast::Black => Contrast::White,
            Contrast::White => Contrast::Black,
        }
    }
}

/// `0.2126 R + 0.7152 G + 0.0722 B` on `[0, 1]` channels.
pub fn relative_luminance(p: &Rgb<u8>) -> f64 {
    (0.2126 * p.0[0] as f64 + 0.7152 * p.0[1] as f64 + 0.0722 * p.0[2] as f64) / 255.0
}

/// Black on light regions, white on dark ones; exactly 0.5 counts as light.
pub fn contrast_for_luminance(luminance: f64) -> Contrast {
    if luminance >= 0.5 {
        Contrast::Black
    } else {
        Contrast::White
    }
}

pub fn mean_luminance(region: &RgbImage) -> Result<f64> {
    let n = region.width() as usize * region.height() as usize;
    if n == 0 {
        return Err(Error::validation("empty color region"));
    }
    Ok(region.pixels().map(relative_luminance).sum::<f64>() / n as f64)
}

pub fn pick_contrast_color(region: &RgbImage) -> Result<Contrast> {
    Ok(contrast_for_luminance(mean_luminance(region)?))
}

pub fn pick_button_text_color(pad: Contrast) -> Contrast {
    pad.opposite()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassStyle {
    pub max_font_size: Option<u32>,
    /// Fixed text color instead of the contrast rule.
    pub color: Option<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSpec {
    /// Recorded for the export; glyphs always come from the built-in
    /// monospace font.
    pub font_family: String,
    pub min_font_size: u32,
    /// `None` bounds the size by the box height only.
    pub max_font_size: Option<u32>,
    pub button_radius: u32,
    pub class_styles: BTreeMap<TextClass, ClassStyle>,
    pub jitter_fraction: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            font_family: "Arial".into(),
            min_font_size: 8,
            max_font_size: None,
            button_radius: 8,
            class_styles: BTreeMap::new(),
            jitter_fraction: 0.2,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_font_size == 0 {
            return Err(Error::validation("min_font_size must be positive"));
        }
        let maxes = std::iter::once(self.max_font_size).chain(self.class_styles.values().map(|s| s.max_font_size));
        for m in maxes.flatten() {
            if m < self.min_font_size {
                return Err(Error::validation(format!(
                    "max font size {m} below min_font_size {}",
                    self.min_font_size
                )));
            }
        }
        if !(0.0..1.0).contains(&self.jitter_fraction) {
            return Err(Error::validation(format!(
                "jitter_fraction {} outside [0, 1)",
                self.jitter_fraction
            )));
        }
        Ok(())
    }

    fn max_size_for(&self, class: TextClass) -> Option<u32> {
        self.class_styles
            .get(&class)
            .and_then(|s| s.max_font_size)
            .or(self.max_font_size)
    }
}

/// How one element ended up on the canvas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedElement {
    pub pixel_box: PixelBox,
    pub font_size: Option<u32>,
    pub lines: Vec<String>,
    pub text_color: Option<Contrast>,
    pub pad_color: Option<Contrast>,
    /// Inked text area `[left, top, right, bottom)` in pixels.
    pub text_extent: Option<[i64; 4]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedDesign {
    pub image: RgbImage,
    pub elements: Vec<RenderedElement>,
    /// Text elements left undrawn because they do not fit at the minimum size.
    pub overflow: Vec<usize>,
}

/// Half-open drawable rectangle of a box, clipped to the canvas.
fn clip(b: &PixelBox, width: u32, height: u32) -> (i64, i64, i64, i64) {
    let l = b.left().max(0);
    let t = b.top().max(0);
    let r = (b.left() + b.w).min(width as i64);
    let btm = (b.top() + b.h).min(height as i64);
    (l, t, r.max(l), btm.max(t))
}

fn region(img: &RgbImage, r: (i64, i64, i64, i64)) -> RgbImage {
    imageops::crop_imm(img, r.0 as u32, r.1 as u32, (r.2 - r.0) as u32, (r.3 - r.1) as u32).to_image()
}

fn draw_pad(img: &mut RgbImage, r: (i64, i64, i64, i64), radius: u32, color: Rgb<u8>) {
    let (w, h) = (r.2 - r.0, r.3 - r.1);
    let rad = (radius as i64).min(w / 2).min(h / 2);
    for y in r.1..r.3 {
        for x in r.0..r.2 {
            // distance test against the nearest corner circle
            let cx = if x < r.0 + rad { r.0 + rad } else if x >= r.2 - rad { r.2 - rad - 1 } else { x };
            let cy = if y < r.1 + rad { r.1 + rad } else if y >= r.3 - rad { r.3 - rad - 1 } else { y };
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx + dy * dy <= rad * rad {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn draw_text(img: &mut RgbImage, font: &MonospaceFont, fit: &TextFit, r: (i64, i64, i64, i64), color: Rgb<u8>) -> [i64; 4] {
    let (bw, bh) = font.measure(&fit.lines, fit.size);
    let left = r.0 + ((r.2 - r.0) - bw as i64) / 2;
    let top = r.1 + ((r.3 - r.1) - bh as i64) / 2;
    let s = fit.size;
    let pitch = (s + font.line_gap(s)) as i64;
    for (li, line) in fit.lines.iter().enumerate() {
        let lw = line.chars().count() as i64 * font.advance(s) as i64;
        let x0 = left + (bw as i64 - lw) / 2;
        let y0 = top + li as i64 * pitch;
        for (ci, c) in line.chars().enumerate() {
            let gx = x0 + ci as i64 * font.advance(s) as i64;
            for py in 0..s {
                for px in 0..s {
                    if font.ink(c, s, px, py) {
                        img.put_pixel((gx + px as i64) as u32, (y0 + py as i64) as u32, color);
                    }
                }
            }
        }
    }
    [left, top, left + bw as i64, top + bh as i64]
}

/// Inset applied to button pads before fitting their text.
fn button_inset(r: (i64, i64, i64, i64)) -> (i64, i64, i64, i64) {
    let pad = ((r.3 - r.1) / 8).max(1);
    let inner = (r.0 + pad, r.1 + pad, r.2 - pad, r.3 - pad);
    if inner.2 > inner.0 && inner.3 > inner.1 {
        inner
    } else {
        r
    }
}

/// Renders every element; texts that do not fit are skipped and listed in
/// `overflow` instead of failing the whole design.
pub fn render_design_lenient(
    background: &BackgroundImage,
    foreground: &ForegroundSet,
    layout: &Layout,
    spec: &RenderSpec,
) -> Result<RenderedDesign> {
    spec.validate()?;
    if layout.len() != foreground.len() {
        return Err(Error::shape(format!(
            "layout has {} boxes for {} foreground elements",
            layout.len(),
            foreground.len()
        )));
    }
    let font = MonospaceFont;
    let bg = background.pixels();
    let (width, height) = (bg.width(), bg.height());
    let mut img = bg.clone();
    let mut elements = Vec::with_capacity(layout.len());
    let mut overflow = Vec::new();
    for (i, (e, b)) in foreground.elements.iter().zip(layout.boxes()).enumerate() {
        let pb = denormalize_box(b, height, width)?;
        let r = clip(&pb, width, height);
        let mut out = RenderedElement {
            pixel_box: pb,
            font_size: None,
            lines: Vec::new(),
            text_color: None,
            pad_color: None,
            text_extent: None,
        };
        let empty = r.2 <= r.0 || r.3 <= r.1;
        match e {
            ForegroundElement::Image(patch) => {
                if !empty {
                    let resized = imageops::resize(patch.patch(), pb.w as u32, pb.h as u32, FilterType::Triangle);
                    imageops::overlay(&mut img, &resized, pb.left(), pb.top());
                }
            }
            ForegroundElement::Text(t) => {
                if empty {
                    overflow.push(i);
                    elements.push(out);
                    continue;
                }
                let under = region(&img, r);
                let style = spec.class_styles.get(&t.class).copied().unwrap_or_default();
                let (text_rect, color) = if t.class == TextClass::Button {
                    let pad = pick_contrast_color(&under)?;
                    draw_pad(&mut img, r, spec.button_radius, pad.rgb());
                    out.pad_color = Some(pad);
                    (button_inset(r), pick_button_text_color(pad))
                } else {
                    (r, pick_contrast_color(&under)?)
                };
                let (tw, th) = ((text_rect.2 - text_rect.0) as u32, (text_rect.3 - text_rect.1) as u32);
                match fit_text_to_box(&font, &t.string, tw, th, spec.min_font_size, spec.max_size_for(t.class), i) {
                    Ok(fit) => {
                        let rgb = style.color.map(Rgb).unwrap_or_else(|| color.rgb());
                        out.text_extent = Some(draw_text(&mut img, &font, &fit, text_rect, rgb));
                        out.text_color = Some(color);
                        out.font_size = Some(fit.size);
                        out.lines = fit.lines;
                    }
                    Err(Error::Overflow { .. }) => overflow.push(i),
                    Err(other) => return Err(other),
                }
            }
        }
        elements.push(out);
    }
    Ok(RenderedDesign {
        image: img,
        elements,
        overflow,
    })
}

/// Like [`render_design_lenient`] but any overflowing text is an error.
pub fn render_design(
    background: &BackgroundImage,
    foreground: &ForegroundSet,
    layout: &Layout,
    spec: &RenderSpec,
) -> Result<RenderedDesign> {
    let out = render_design_lenient(background, foreground, layout, spec)?;
    if !out.overflow.is_empty() {
        return Err(Error::Overflow { elements: out.overflow });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{ImageElement, TextElement};

    #[test]
    fn contrast_rules() {
        let white = RgbImage::from_pixel(4, 4, Rgb([255, 255, 255]));
        let black = RgbImage::from_pixel(4, 4, Rgb([0, 0, 0]));
        assert_eq!(pick_contrast_color(&white).unwrap(), Contrast::Black);
        assert_eq!(pick_contrast_color(&black).unwrap(), Contrast::White);
        assert_eq!(contrast_for_luminance(0.5), Contrast::Black);
        assert_eq!(contrast_for_luminance(0.5 - 1e-12), Contrast::White);
        assert!(pick_contrast_color(&RgbImage::new(0, 3)).is_err());
        assert_eq!(pick_button_text_color(Contrast::Black), Contrast::White);
        assert_eq!(pick_button_text_color(Contrast::White), Contrast::Black);
        let pad = pick_contrast_color(&white).unwrap();
        assert_eq!(pick_button_text_color(pad), Contrast::White);
    }

    fn banner() -> (BackgroundImage, ForegroundSet, Layout) {
        let bg = BackgroundImage::new(RgbImage::from_pixel(200, 160, Rgb([240, 240, 240]))).unwrap();
        let fg = ForegroundSet::new(vec![
            ForegroundElement::Text(TextElement::new("Summer Sale", TextClass::Header)),
            ForegroundElement::Text(TextElement::new("Shop now", TextClass::Button)),
            ForegroundElement::Image(ImageElement::new(RgbImage::from_pixel(10, 10, Rgb([200, 0, 0]))).unwrap()),
        ]);
        let layout = Layout::from_arrays(&[[0.2, 0.5, 0.2, 0.8], [0.5, 0.5, 0.15, 0.5], [0.8, 0.5, 0.2, 0.2]]);
        (bg, fg, layout)
    }

    #[test]
    fn renders_deterministically_inside_boxes() {
        let (bg, fg, layout) = banner();
        let spec = RenderSpec::default();
        let a = render_design(&bg, &fg, &layout, &spec).unwrap();
        let b = render_design(&bg, &fg, &layout, &spec).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.elements[1].pad_color, Some(Contrast::Black));
        assert_eq!(a.elements[1].text_color, Some(Contrast::White));
        for (x, y, p) in a.image.enumerate_pixels() {
            if p != bg.pixels().get_pixel(x, y) {
                let inside = a.elements.iter().any(|e| {
                    let b = e.pixel_box;
                    (b.left()..b.left() + b.w).contains(&(x as i64)) && (b.top()..b.top() + b.h).contains(&(y as i64))
                });
                assert!(inside, "({x},{y}) changed outside every box");
            }
        }
    }

    #[test]
    fn no_elements_returns_background() {
        let (bg, _, _) = banner();
        let out = render_design(&bg, &ForegroundSet::default(), &Layout::new(Vec::new()), &RenderSpec::default()).unwrap();
        assert_eq!(&out.image, bg.pixels());
    }

    #[test]
    fn overflow_lists_elements() {
        let (bg, fg, _) = banner();
        let tiny = Layout::from_arrays(&[[0.2, 0.5, 0.01, 0.05], [0.5, 0.5, 0.15, 0.5], [0.8, 0.5, 0.2, 0.2]]);
        let err = render_design(&bg, &fg, &tiny, &RenderSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Overflow { ref elements } if elements == &[0]));
        let lenient = render_design_lenient(&bg, &fg, &tiny, &RenderSpec::default()).unwrap();
        assert_eq!(lenient.overflow, vec![0]);
        assert!(lenient.elements[1].font_size.is_some());
    }

    #[test]
    fn spec_validation() {
        let mut s = RenderSpec::default();
        s.max_font_size = Some(4);
        assert!(s.validate().is_err());
        let mut s = RenderSpec::default();
        s.jitter_fraction = 1.0;
        assert!(s.validate().is_err());
    }
}
