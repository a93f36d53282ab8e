//! Annotation manifests, the train/test split, synthetic banners and
//! background masking.
//!
//! A manifest is a JSON file; backgrounds and image patches are PNG or JPEG
//! files referenced by paths relative to the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elements::{
    BackgroundImage, DesignSample, ForegroundElement, ForegroundSet, ImageElement, TextClass,
    TextElement,
};
use crate::error::{Error, Result};
use crate::geometry::{denormalize_box, Layout, NormalizedBox, PixelBox};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationElement {
    #[serde(rename = "type")]
    pub kind: ElementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub string: Option<String>,
    /// `[cy, cx, h, w]`, normalized.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub id: String,
    pub background_path: String,
    pub width: u32,
    pub height: u32,
    pub elements: Vec<AnnotationElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub split_seed: u64,
    pub records: Vec<AnnotationRecord>,
}

fn invalid(record: &str, field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("record {record:?}, {field}: {msg}"))
}

impl AnnotationElement {
    pub fn text(class: TextClass, string: impl Into<String>, b: &NormalizedBox) -> Self {
        Self {
            kind: ElementKind::Text,
            class: Some(class.as_str().to_string()),
            string: Some(string.into()),
            bbox: b.to_array(),
            patch_path: None,
        }
    }

    pub fn image(patch_path: impl Into<String>, b: &NormalizedBox) -> Self {
        Self {
            kind: ElementKind::Image,
            class: None,
            string: None,
            bbox: b.to_array(),
            patch_path: Some(patch_path.into()),
        }
    }
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid(&self.id, "width/height", "must be positive"));
        }
        if self.elements.is_empty() {
            return Err(invalid(&self.id, "elements", "at least one element is required"));
        }
        for (i, e) in self.elements.iter().enumerate() {
            let field = |name: &str| format!("elements[{i}].{name}");
            let [cy, cx, h, w] = e.bbox;
            NormalizedBox::try_new(cy, cx, h, w).map_err(|err| invalid(&self.id, &field("box"), err))?;
            match e.kind {
                ElementKind::Text => {
                    let class = e
                        .class
                        .as_deref()
                        .ok_or_else(|| invalid(&self.id, &field("class"), "missing for text"))?;
                    class
                        .parse::<TextClass>()
                        .map_err(|err| invalid(&self.id, &field("class"), err))?;
                    if e.string.is_none() {
                        return Err(invalid(&self.id, &field("string"), "missing for text"));
                    }
                }
                ElementKind::Image => {
                    if e.patch_path.is_none() {
                        return Err(invalid(&self.id, &field("patch_path"), "missing for image"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::from_arrays(&self.elements.iter().map(|e| e.bbox).collect::<Vec<_>>())
    }
}

impl DatasetManifest {
    pub fn new(split_seed: u64, records: Vec<AnnotationRecord>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            split_seed,
            records,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return Err(invalid(&r.id, "id", "duplicate"));
            }
            r.validate()?;
        }
        Ok(())
    }
}

/// Reads and validates a manifest, checking that every referenced image exists.
pub fn load_dataset(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    let base = path.parent().unwrap_or(Path::new("."));
    for r in &manifest.records {
        let files = std::iter::once(&r.background_path).chain(r.elements.iter().filter_map(|e| e.patch_path.as_ref()));
        for f in files {
            let p = base.join(f);
            if !p.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("record {:?}: missing image {}", r.id, p.display()),
                )));
            }
        }
    }
    Ok(manifest)
}

pub fn save_dataset(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

/// Loads the images of every record into memory.
pub fn load_samples(manifest: &DatasetManifest, base_dir: &Path) -> Result<Vec<DesignSample>> {
    manifest
        .records
        .iter()
        .map(|r| record_to_sample(r, base_dir))
        .collect()
}

pub fn record_to_sample(r: &AnnotationRecord, base_dir: &Path) -> Result<DesignSample> {
    r.validate()?;
    let background = BackgroundImage::new(load_rgb(&base_dir.join(&r.background_path))?)?;
    let elements = r
        .elements
        .iter()
        .map(|e| {
            Ok(match e.kind {
                ElementKind::Text => ForegroundElement::Text(TextElement::new(
                    e.string.clone().unwrap_or_default(),
                    e.class.as_deref().unwrap_or_default().parse()?,
                )),
                ElementKind::Image => ForegroundElement::Image(ImageElement::new(load_rgb(
                    &base_dir.join(e.patch_path.as_deref().unwrap_or_default()),
                )?)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DesignSample::new(r.id.clone(), background, ForegroundSet::new(elements), r.layout())
}

/// Deterministic shuffled split holding out `ceil(n / 10)` records.
pub fn split_train_test(manifest: &DatasetManifest, seed: u64) -> Result<(Vec<AnnotationRecord>, Vec<AnnotationRecord>)> {
    let n = manifest.records.len();
    if n < 10 {
        return Err(Error::config(format!("need at least 10 records to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = n.div_ceil(10);
    let pick = |idx: &[usize]| idx.iter().map(|&i| manifest.records[i].clone()).collect();
    Ok((pick(&order[n_test..]), pick(&order[..n_test])))
}

/// Same partition applied to in-memory samples.
pub fn split_samples<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let n = items.len();
    if n < 10 {
        return Err(Error::config(format!("need at least 10 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = n.div_ceil(10);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&order[n_test..]), pick(&order[..n_test])))
}

/// Knobs for the synthetic banner generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub min_width: u32,
    pub max_width: u32,
    pub min_height: u32,
    pub max_height: u32,
    /// Probability of a product image above the header.
    pub image_probability: f64,
    pub max_body: usize,
    pub disclaimer_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_width: 192,
            max_width: 320,
            min_height: 192,
            max_height: 320,
            image_probability: 0.3,
            max_body: 2,
            disclaimer_probability: 0.4,
        }
    }
}

const WORDS: &[&str] = &[
    "sale", "new", "summer", "deals", "shop", "today", "free", "shipping", "limited", "offer",
    "exclusive", "collection", "save", "big", "on", "your", "favorite", "styles", "discover",
    "fresh", "arrivals", "for", "every", "season", "get", "more", "with", "members", "only",
    "best", "prices", "of", "the", "year", "now", "open", "weekend", "special", "up", "to",
];

fn sentence(rng: &mut ChaCha8Rng, target: usize, capitalize: bool) -> String {
    let mut s = String::new();
    while s.chars().count() < target {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(WORDS[rng.random_range(0..WORDS.len())]);
    }
    let mut s: String = s.chars().take(target.max(1)).collect();
    s = s.trim_end().to_string();
    if capitalize {
        let mut c = s.chars();
        if let Some(f) = c.next() {
            s = f.to_uppercase().chain(c).collect();
        }
    }
    s
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn synth_background(rng: &mut ChaCha8Rng, width: u32, height: u32) -> RgbImage {
    let c0: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
    let c1: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
    match rng.random_range(0..3) {
        0 => {
            let vertical = rng.random_bool(0.5);
            RgbImage::from_fn(width, height, |x, y| {
                let t = if vertical { y as f64 / height as f64 } else { x as f64 / width as f64 };
                Rgb(std::array::from_fn(|c| lerp(c0[c], c1[c], t) as u8))
            })
        }
        1 => {
            // bilinear value noise on a coarse grid
            let g = rng.random_range(3..8usize);
            let grid: Vec<f64> = (0..(g + 1) * (g + 1)).map(|_| rng.random::<f64>()).collect();
            RgbImage::from_fn(width, height, |x, y| {
                let fx = x as f64 / width as f64 * g as f64;
                let fy = y as f64 / height as f64 * g as f64;
                let (ix, iy) = (fx as usize, fy as usize);
                let (tx, ty) = (fx - ix as f64, fy - iy as f64);
                let v = |i: usize, j: usize| grid[j.min(g) * (g + 1) + i.min(g)];
                let top = lerp(v(ix, iy), v(ix + 1, iy), tx);
                let bottom = lerp(v(ix, iy + 1), v(ix + 1, iy + 1), tx);
                let t = lerp(top, bottom, ty);
                Rgb(std::array::from_fn(|c| lerp(c0[c], c1[c], t) as u8))
            })
        }
        _ => RgbImage::from_pixel(width, height, Rgb(c0.map(|v| v as u8))),
    }
}

fn synth_patch(rng: &mut ChaCha8Rng) -> RgbImage {
    let w = rng.random_range(24..64);
    let h = rng.random_range(24..64);
    let fill: [u8; 3] = std::array::from_fn(|_| rng.random());
    let ring: [u8; 3] = std::array::from_fn(|_| rng.random());
    RgbImage::from_fn(w, h, |x, y| {
        let dx = x as f64 / w as f64 - 0.5;
        let dy = y as f64 / h as f64 - 0.5;
        if dx * dx + dy * dy < 0.12 {
            Rgb(fill)
        } else {
            Rgb(ring)
        }
    })
}

const AREA_PER_CHAR: f64 = 0.0018;

struct Planned {
    element: ForegroundElement,
    h: f64,
    w: f64,
}

/// One banner with a centered, non-overlapping column of elements in the
/// order image → header → body → button → disclaimer.
fn synth_sample(rng: &mut ChaCha8Rng, id: String, cfg: &SynthConfig) -> Result<DesignSample> {
    let width = rng.random_range(cfg.min_width..=cfg.max_width);
    let height = rng.random_range(cfg.min_height..=cfg.max_height);
    let background = BackgroundImage::new(synth_background(rng, width, height))?;

    let mut plan = Vec::new();
    if rng.random_bool(cfg.image_probability) {
        plan.push(Planned {
            element: ForegroundElement::Image(ImageElement::new(synth_patch(rng))?),
            h: rng.random_range(0.15..0.25),
            w: rng.random_range(0.2..0.4),
        });
    }
    // text boxes: area is roughly proportional to the character count
    let mut text = |rng: &mut ChaCha8Rng, class: TextClass, len: std::ops::Range<usize>, h: f64| {
        let target = rng.random_range(len);
        let s = sentence(rng, target, class != TextClass::Disclaimer);
        let chars = s.chars().count() as f64;
        let h = h * rng.random_range(0.9..1.1);
        let w = (AREA_PER_CHAR * chars / h * rng.random_range(0.9..1.1)).clamp(0.1, 0.8);
        plan.push(Planned {
            element: ForegroundElement::Text(TextElement::new(s, class)),
            h,
            w,
        });
    };
    text(rng, TextClass::Header, 6..22, 0.12);
    for _ in 0..rng.random_range(0..=cfg.max_body) {
        text(rng, TextClass::Body, 10..28, 0.07);
    }
    text(rng, TextClass::Button, 5..14, 0.08);
    if rng.random_bool(cfg.disclaimer_probability) {
        text(rng, TextClass::Disclaimer, 12..24, 0.06);
    }

    let content: f64 = plan.iter().map(|p| p.h).sum();
    let budget = 0.9;
    let scale = if content > budget * 0.8 { budget * 0.8 / content } else { 1.0 };
    let gap_total = budget - content * scale;
    let gap = gap_total / (plan.len() + 1) as f64;
    let cx: f64 = rng.random_range(0.4..0.6);
    let mut top = 0.05 + gap * rng.random_range(0.5..1.5);
    let mut boxes = Vec::with_capacity(plan.len());
    for p in &plan {
        let h = p.h * scale;
        let w = p.w.min(2.0 * cx.min(1.0 - cx));
        boxes.push(NormalizedBox::new(top + h / 2.0, cx, h, w));
        top += h + gap;
    }
    let foreground = ForegroundSet::new(plan.into_iter().map(|p| p.element).collect());
    DesignSample::new(id, background, foreground, Layout::new(boxes))
}

/// In-memory synthetic samples, byte-for-byte determined by `seed`.
pub fn synth_samples(count: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<DesignSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| synth_sample(&mut rng, format!("synth-{seed}-{i:05}"), cfg))
        .collect()
}

/// A generated dataset: the manifest plus the images it references.
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub images: BTreeMap<String, RgbImage>,
    pub samples: Vec<DesignSample>,
}

pub fn sample_to_record(sample: &DesignSample, images: &mut BTreeMap<String, RgbImage>) -> AnnotationRecord {
    let bg_path = format!("images/{}_bg.png", sample.id);
    images.insert(bg_path.clone(), sample.background.pixels().clone());
    let elements = sample
        .foreground
        .elements
        .iter()
        .zip(sample.layout.boxes())
        .enumerate()
        .map(|(i, (e, b))| match e {
            ForegroundElement::Text(t) => AnnotationElement::text(t.class, t.string.clone(), b),
            ForegroundElement::Image(img) => {
                let p = format!("images/{}_patch{i}.png", sample.id);
                images.insert(p.clone(), img.patch().clone());
                AnnotationElement::image(p, b)
            }
        })
        .collect();
    AnnotationRecord {
        id: sample.id.clone(),
        background_path: bg_path,
        width: sample.background.width(),
        height: sample.background.height(),
        elements,
    }
}

pub fn synth_dataset_generate(count: usize, seed: u64, cfg: &SynthConfig) -> Result<SynthDataset> {
    if count == 0 {
        return Err(Error::config("count must be at least 1"));
    }
    let samples = synth_samples(count, seed, cfg)?;
    let mut images = BTreeMap::new();
    let records = samples.iter().map(|s| sample_to_record(s, &mut images)).collect();
    Ok(SynthDataset {
        manifest: DatasetManifest::new(seed, records),
        images,
        samples,
    })
}

/// Writes `manifest.json` and PNG files under `dir`; returns the manifest path.
pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> Result<PathBuf> {
    for (rel, img) in &ds.images {
        let p = dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        img.save(&p)?;
    }
    let path = dir.join("manifest.json");
    save_dataset(&ds.manifest, &path)?;
    Ok(path)
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn from_pixel_box(b: &PixelBox) -> Self {
        Self {
            x0: b.left(),
            y0: b.top(),
            x1: b.left() + b.w,
            y1: b.top() + b.h,
        }
    }

    fn intersects(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

/// Replaces 1 to 3 random rectangles (each at most 10% of the image) that
/// avoid every layout box with a blurred copy of themselves.
pub fn mask_random_regions(bg: &BackgroundImage, layout: &Layout, seed: u64) -> Result<BackgroundImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (bg.width() as i64, bg.height() as i64);
    let mut taken = layout
        .boxes()
        .iter()
        .map(|b| Ok(Rect::from_pixel_box(&denormalize_box(b, h as u32, w as u32)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = bg.pixels().clone();
    let max_area = (w * h) / 10;
    let wanted = rng.random_range(1..=3);
    for _ in 0..wanted {
        for _attempt in 0..64 {
            let rw = rng.random_range(1..=(w / 2).max(1));
            let rh = rng.random_range(1..=(h / 2).max(1));
            if rw * rh > max_area.max(1) {
                continue;
            }
            let x0 = rng.random_range(0..=w - rw);
            let y0 = rng.random_range(0..=h - rh);
            let r = Rect { x0, y0, x1: x0 + rw, y1: y0 + rh };
            if taken.iter().any(|t| t.intersects(&r)) {
                continue;
            }
            blur_region(&mut out, x0 as u32, y0 as u32, rw as u32, rh as u32);
            taken.push(r);
            break;
        }
    }
    BackgroundImage::new(out)
}

fn blur_region(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32) {
    let src = img.clone();
    let radius: i64 = 3;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let mut acc = [0u32; 3];
            let mut n = 0u32;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let sx = (x as i64 + dx).clamp(x0 as i64, (x0 + w - 1) as i64) as u32;
                    let sy = (y as i64 + dy).clamp(y0 as i64, (y0 + h - 1) as i64) as u32;
                    let p = src.get_pixel(sx, sy);
                    for c in 0..3 {
                        acc[c] += p.0[c] as u32;
                    }
                    n += 1;
                }
            }
            img.put_pixel(x, y, Rgb(acc.map(|v| (v / n) as u8)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{misalignment_metric, overlap_metric};

    fn record(id: &str, class: &str, bbox: [f64; 4]) -> AnnotationRecord {
        AnnotationRecord {
            id: id.into(),
            background_path: "bg.png".into(),
            width: 64,
            height: 64,
            elements: vec![AnnotationElement {
                kind: ElementKind::Text,
                class: Some(class.into()),
                string: Some("Hi".into()),
                bbox,
                patch_path: None,
            }],
        }
    }

    #[test]
    fn rejects_unknown_class_and_out_of_range_box() {
        let err = record("a", "logo", [0.5, 0.5, 0.2, 0.2]).validate().unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert!(err.to_string().contains("class"));
        let err = record("b", "header", [0.5, 0.5, 1.5, 0.2]).validate().unwrap_err();
        assert!(err.to_string().contains("box"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = record("a", "header", [0.5, 0.5, 0.2, 0.2]);
        let m = DatasetManifest::new(0, vec![r.clone(), r]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn manifest_round_trip_and_missing_image() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset_generate(3, 5, &SynthConfig::default()).unwrap();
        let path = write_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, ds.manifest);
        let samples = load_samples(&loaded, dir.path()).unwrap();
        assert_eq!(samples, ds.samples);

        fs::remove_file(dir.path().join(&ds.manifest.records[1].background_path)).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Io(_))));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let records = (0..100)
            .map(|i| record(&format!("r{i}"), "body", [0.5, 0.5, 0.2, 0.2]))
            .collect();
        let m = DatasetManifest::new(7, records);
        let (train, test) = split_train_test(&m, 7).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        let ids: BTreeSet<_> = train.iter().chain(&test).map(|r| r.id.clone()).collect();
        assert_eq!(ids.len(), 100);
        assert_eq!(split_train_test(&m, 7).unwrap().1, test);
        assert_ne!(split_train_test(&m, 8).unwrap().1, test);

        let small = DatasetManifest::new(0, m.records[..9].to_vec());
        assert!(split_train_test(&small, 0).unwrap_err().is_config());
    }

    #[test]
    fn synthetic_manifest_is_reproducible() {
        let a = synth_dataset_generate(20, 42, &SynthConfig::default()).unwrap();
        let b = synth_dataset_generate(20, 42, &SynthConfig::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a.manifest).unwrap(),
            serde_json::to_string(&b.manifest).unwrap()
        );
        assert_eq!(a.images, b.images);
        let c = synth_dataset_generate(20, 43, &SynthConfig::default()).unwrap();
        assert_ne!(a.manifest.records, c.manifest.records);
    }

    #[test]
    fn synthetic_layouts_are_clean_and_ordered() {
        let samples = synth_samples(200, 1, &SynthConfig::default()).unwrap();
        let layouts: Vec<Layout> = samples.iter().map(|s| s.layout.clone()).collect();
        assert_eq!(overlap_metric(&layouts).unwrap(), 0.0);
        assert_eq!(misalignment_metric(&layouts).unwrap(), 0.0);

        let rank = |c: TextClass| match c {
            TextClass::Header => 0,
            TextClass::Body => 1,
            TextClass::Button => 2,
            TextClass::Disclaimer => 3,
        };
        let (mut lens, mut areas) = (Vec::new(), Vec::new());
        for s in &samples {
            let mut last_rank = -1i32;
            let mut last_cy = f64::NEG_INFINITY;
            for (e, b) in s.foreground.elements.iter().zip(s.layout.boxes()) {
                assert!(b.cy() > last_cy);
                last_cy = b.cy();
                if let Some(t) = e.as_text() {
                    assert!(rank(t.class) >= last_rank);
                    last_rank = rank(t.class);
                    lens.push(t.length() as f64);
                    areas.push(b.area());
                }
                NormalizedBox::try_new(b.cy(), b.cx(), b.h(), b.w()).unwrap();
            }
        }
        let n = lens.len() as f64;
        let ml = lens.iter().sum::<f64>() / n;
        let ma = areas.iter().sum::<f64>() / n;
        let cov: f64 = lens.iter().zip(&areas).map(|(l, a)| (l - ml) * (a - ma)).sum();
        let sl: f64 = lens.iter().map(|l| (l - ml).powi(2)).sum::<f64>().sqrt();
        let sa: f64 = areas.iter().map(|a| (a - ma).powi(2)).sum::<f64>().sqrt();
        let r = cov / (sl * sa);
        assert!(r > 0.5, "length/area correlation {r}");
    }

    #[test]
    fn masking_leaves_layout_boxes_untouched() {
        let samples = synth_samples(20, 3, &SynthConfig::default()).unwrap();
        let mut changed_any = false;
        for (i, s) in samples.iter().enumerate() {
            let masked = mask_random_regions(&s.background, &s.layout, i as u64).unwrap();
            let (w, h) = (s.background.width(), s.background.height());
            let boxes: Vec<Rect> = s
                .layout
                .boxes()
                .iter()
                .map(|b| Rect::from_pixel_box(&denormalize_box(b, h, w).unwrap()))
                .collect();
            for (x, y, p) in masked.pixels().enumerate_pixels() {
                let inside = boxes.iter().any(|r| {
                    r.intersects(&Rect { x0: x as i64, y0: y as i64, x1: x as i64 + 1, y1: y as i64 + 1 })
                });
                if *p != *s.background.pixels().get_pixel(x, y) {
                    assert!(!inside, "pixel ({x},{y}) inside a box changed");
                    changed_any = true;
                }
            }
        }
        assert!(changed_any);
    }
}
