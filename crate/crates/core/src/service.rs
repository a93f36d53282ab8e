//! Design sessions: upload, candidate generation, selection, manual edits
//! and export, backed by a directory store.

use std::collections::HashMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use image::{ImageFormat, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batch::PreparedSample;
use crate::checkpoint::Checkpoint;
use crate::conditioning::TextEncoder;
use crate::config::RunConfig;
use crate::dataset::{AnnotationElement, AnnotationRecord};
use crate::elements::{BackgroundImage, ForegroundElement, ForegroundSet, TextClass, TextElement};
use crate::error::{Error, Result};
use crate::geometry::{Layout, NormalizedBox};
use crate::renderer::{enforce_center_alignment, jitter_layout, render_design_lenient, ClassStyle, RenderSpec, RenderedDesign};
use crate::training::{standard_normal, Trainer};

pub const DEFAULT_CANDIDATES: usize = 6;
pub const MAX_CANDIDATES: usize = 32;
pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

/// A generator ready for inference, shared read-only between requests.
pub struct InferenceModel {
    pub config: RunConfig,
    trainer: Trainer,
    encoder: Box<dyn TextEncoder + Send + Sync>,
}

impl InferenceModel {
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let config = ck.config.clone();
        Self::from_trainer(config, ck.into_trainer()?)
    }

    /// Freshly initialized weights; useful for smoke tests and latency checks.
    pub fn untrained(config: &RunConfig) -> Result<Self> {
        let t = Trainer::new(&config.train, &config.network, &config.embedder, &config.weights)?;
        Self::from_trainer(config.clone(), t)
    }

    pub fn from_trainer(config: RunConfig, trainer: Trainer) -> Result<Self> {
        let encoder = config.text_encoder()?;
        Ok(Self {
            config,
            trainer,
            encoder,
        })
    }

    /// `count` layouts for one design, one noise draw each.
    pub fn generate(&self, background: &BackgroundImage, foreground: &ForegroundSet, count: usize, seed: u64) -> Result<Vec<Layout>> {
        if count == 0 {
            return Err(Error::validation("candidate count must be at least 1"));
        }
        let sample = PreparedSample::from_inputs(
            "request",
            background,
            foreground,
            None,
            &self.config.embedder,
            &self.config.network,
            self.encoder.as_ref(),
        )?;
        let refs = vec![&sample; count];
        let batch = self.trainer.collate(&refs)?;
        let noise = standard_normal(
            &mut ChaCha8Rng::seed_from_u64(seed),
            &[count, batch.slots, self.config.embedder.noise_dim],
            self.trainer.dtype(),
            self.trainer.device(),
        )?;
        self.trainer.predict(&batch, &noise)
    }
}

/// One finished candidate: generated, jittered, center-aligned and rendered.
#[derive(Debug, Clone)]
pub struct CandidateDesign {
    pub seed: u64,
    pub layout: Layout,
    pub render: RenderedDesign,
    pub warning: Option<String>,
}

fn overflow_warning(overflow: &[usize]) -> Option<String> {
    (!overflow.is_empty()).then(|| format!("text overflow at minimum font size in elements {overflow:?}"))
}

/// Seed for the `k`-th candidate's jitter.
pub fn candidate_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn design_candidates(
    model: &InferenceModel,
    background: &BackgroundImage,
    foreground: &ForegroundSet,
    count: usize,
    seed: u64,
    spec: &RenderSpec,
) -> Result<Vec<CandidateDesign>> {
    let layouts = model.generate(background, foreground, count, seed)?;
    layouts
        .into_iter()
        .enumerate()
        .map(|(k, raw)| {
            let s = candidate_seed(seed, k);
            let layout = enforce_center_alignment(&jitter_layout(&raw, spec.jitter_fraction, s)?);
            let render = render_design_lenient(background, foreground, &layout, spec)?;
            Ok(CandidateDesign {
                seed: s,
                warning: overflow_warning(&render.overflow),
                layout,
                render,
            })
        })
        .collect()
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundInfo {
    pub sha256: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForegroundInput {
    pub string: String,
    pub class: TextClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

/// Client form of a foreground text; `class` may be a studio label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForegroundRequest {
    pub string: String,
    pub class: String,
    #[serde(default)]
    pub color: Option<[u8; 3]>,
}

impl ForegroundRequest {
    pub fn resolve(&self) -> Result<ForegroundInput> {
        if self.string.trim().is_empty() {
            return Err(Error::validation("foreground text is empty"));
        }
        Ok(ForegroundInput {
            string: self.string.clone(),
            class: TextClass::from_ui_label(&self.class)?,
            color: self.color,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub seed: u64,
    pub layout: Layout,
    pub preview_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSession {
    pub id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub background: Option<BackgroundInfo>,
    pub foreground: Vec<ForegroundInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub button_radius: Option<u32>,
    pub candidates: Vec<CandidateRecord>,
    pub selected: Option<usize>,
    /// Manual edits of the selected candidate; candidates themselves never change.
    pub edited_layout: Option<Layout>,
}

impl DesignSession {
    fn new(id: String) -> Self {
        let t = now_secs();
        Self {
            id,
            created_at: t,
            updated_at: t,
            background: None,
            foreground: Vec::new(),
            button_radius: None,
            candidates: Vec::new(),
            selected: None,
            edited_layout: None,
        }
    }

    fn clear_results(&mut self) {
        self.candidates.clear();
        self.selected = None;
        self.edited_layout = None;
    }

    /// Layout of the selected candidate with any manual edits applied.
    pub fn current_layout(&self) -> Option<Layout> {
        let sel = self.selected?;
        self.edited_layout
            .clone()
            .or_else(|| self.candidates.get(sel).map(|c| c.layout.clone()))
    }

    pub fn foreground_set(&self) -> ForegroundSet {
        ForegroundSet::from_texts(self.foreground.iter().map(|f| TextElement::new(f.string.clone(), f.class)))
    }
}

/// Sessions as JSON files and images as content-addressed blobs.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
    ttl: Duration,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    pub fn open(root: &Path, ttl: Duration) -> Result<Self> {
        fs::create_dir_all(root.join("sessions"))?;
        fs::create_dir_all(root.join("blobs"))?;
        Ok(Self {
            root: root.to_path_buf(),
            ttl,
        })
    }

    fn session_path(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(Error::NotFound(format!("session {id:?}")));
        }
        Ok(self.root.join("sessions").join(format!("{id}.json")))
    }

    fn blob_path(&self, sha: &str) -> Result<PathBuf> {
        if sha.len() != 64 || !sha.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::NotFound(format!("blob {sha:?}")));
        }
        Ok(self.root.join("blobs").join(sha))
    }

    fn expired(&self, s: &DesignSession) -> bool {
        now_secs().saturating_sub(s.updated_at) > self.ttl.as_secs()
    }

    pub fn create(&self) -> Result<DesignSession> {
        self.sweep()?;
        let s = DesignSession::new(uuid::Uuid::new_v4().simple().to_string());
        self.save(&s)?;
        Ok(s)
    }

    pub fn load(&self, id: &str) -> Result<DesignSession> {
        let path = self.session_path(id)?;
        let text = fs::read_to_string(&path).map_err(|_| Error::NotFound(format!("session {id:?}")))?;
        let s: DesignSession = serde_json::from_str(&text)?;
        if self.expired(&s) {
            let _ = fs::remove_file(&path);
            return Err(Error::NotFound(format!("session {id:?} expired")));
        }
        Ok(s)
    }

    pub fn save(&self, s: &DesignSession) -> Result<()> {
        let path = self.session_path(&s.id)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(s)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Removes sessions past their time to live.
    pub fn sweep(&self) -> Result<usize> {
        let mut removed = 0;
        for entry in fs::read_dir(self.root.join("sessions"))? {
            let path = entry?.path();
            let Ok(text) = fs::read_to_string(&path) else { continue };
            if let Ok(s) = serde_json::from_str::<DesignSession>(&text) {
                if self.expired(&s) {
                    fs::remove_file(&path)?;
                    removed += 1;
                }
            }
        }
        Ok(removed)
    }

    pub fn put_blob(&self, bytes: &[u8]) -> Result<String> {
        let sha = sha256_hex(bytes);
        let path = self.blob_path(&sha)?;
        if !path.exists() {
            fs::write(&path, bytes)?;
        }
        Ok(sha)
    }

    pub fn get_blob(&self, sha: &str) -> Result<Vec<u8>> {
        fs::read(self.blob_path(sha)?).map_err(|_| Error::NotFound(format!("blob {sha:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxEdit {
    pub element: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportResult {
    pub image_sha256: String,
    pub record: AnnotationRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub store_dir: PathBuf,
    pub ttl: Duration,
    /// Pins every seed; otherwise each generation draws a fresh one.
    pub fixed_seed: Option<u64>,
    pub render: RenderSpec,
}

impl ServiceOptions {
    pub fn new(store_dir: impl Into<PathBuf>) -> Self {
        Self {
            store_dir: store_dir.into(),
            ttl: DEFAULT_TTL,
            fixed_seed: None,
            render: RenderSpec::default(),
        }
    }
}

pub struct DesignService {
    model: Arc<InferenceModel>,
    store: SessionStore,
    fixed_seed: Option<u64>,
    render: RenderSpec,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl DesignService {
    pub fn new(model: Arc<InferenceModel>, opts: ServiceOptions) -> Result<Self> {
        opts.render.validate()?;
        Ok(Self {
            model,
            store: SessionStore::open(&opts.store_dir, opts.ttl)?,
            fixed_seed: opts.fixed_seed,
            render: opts.render,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &InferenceModel {
        &self.model
    }

    /// Serializes work on one session; other sessions proceed in parallel.
    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut DesignSession) -> Result<T>) -> Result<T> {
        let lock = {
            let mut map = self.locks.lock().unwrap_or_else(|e| e.into_inner());
            map.entry(id.to_string()).or_default().clone()
        };
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut s = self.store.load(id)?;
        let out = f(&mut s)?;
        s.updated_at = now_secs();
        self.store.save(&s)?;
        Ok(out)
    }

    pub fn create_session(&self) -> Result<DesignSession> {
        self.store.create()
    }

    pub fn session(&self, id: &str) -> Result<DesignSession> {
        self.store.load(id)
    }

    pub fn blob(&self, sha: &str) -> Result<Vec<u8>> {
        self.store.get_blob(sha)
    }

    fn load_background(&self, info: &BackgroundInfo) -> Result<BackgroundImage> {
        let bytes = self.store.get_blob(&info.sha256)?;
        BackgroundImage::new(image::load_from_memory(&bytes)?.to_rgb8())
    }

    pub fn put_background(&self, id: &str, bytes: &[u8]) -> Result<BackgroundInfo> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| Error::validation(format!("undecodable image: {e}")))?
            .to_rgb8();
        if img.width() == 0 || img.height() == 0 {
            return Err(Error::validation("image has no pixels"));
        }
        let sha = self.store.put_blob(bytes)?;
        let info = BackgroundInfo {
            sha256: sha,
            width: img.width(),
            height: img.height(),
        };
        self.with_session(id, |s| {
            if s.background.as_ref() != Some(&info) {
                s.background = Some(info.clone());
                s.clear_results();
            }
            Ok(info.clone())
        })
    }

    pub fn put_foreground(&self, id: &str, items: &[ForegroundRequest], button_radius: Option<u32>) -> Result<Vec<ForegroundInput>> {
        let resolved = items.iter().map(|r| r.resolve()).collect::<Result<Vec<_>>>()?;
        if resolved.len() > self.model.config.network.max_elements {
            return Err(Error::validation(format!(
                "{} elements exceed the model's limit of {}",
                resolved.len(),
                self.model.config.network.max_elements
            )));
        }
        self.with_session(id, |s| {
            if s.foreground != resolved || s.button_radius != button_radius {
                s.foreground = resolved.clone();
                s.button_radius = button_radius;
                s.clear_results();
            }
            Ok(resolved.clone())
        })
    }

    fn spec_for(&self, s: &DesignSession) -> RenderSpec {
        let mut spec = self.render.clone();
        if let Some(r) = s.button_radius {
            spec.button_radius = r;
        }
        for f in &s.foreground {
            if let Some(c) = f.color {
                spec.class_styles.entry(f.class).or_insert(ClassStyle::default()).color = Some(c);
            }
        }
        spec
    }

    /// Generates, renders and stores `count` candidates (default six).
    pub fn generate_candidates(&self, id: &str, count: Option<usize>) -> Result<Vec<CandidateRecord>> {
        let count = count.unwrap_or(DEFAULT_CANDIDATES);
        if count == 0 || count > MAX_CANDIDATES {
            return Err(Error::validation(format!("count must be in 1..={MAX_CANDIDATES}")));
        }
        self.with_session(id, |s| {
            let info = s
                .background
                .clone()
                .ok_or_else(|| Error::Conflict("upload a background first".into()))?;
            if s.foreground.is_empty() {
                return Err(Error::Conflict("add at least one foreground element first".into()));
            }
            let bg = self.load_background(&info)?;
            let seed = self.fixed_seed.unwrap_or_else(rand::random);
            let designs = design_candidates(&self.model, &bg, &s.foreground_set(), count, seed, &self.spec_for(s))?;
            let mut records = Vec::with_capacity(designs.len());
            for (index, d) in designs.into_iter().enumerate() {
                records.push(CandidateRecord {
                    index,
                    seed: d.seed,
                    layout: d.layout,
                    preview_sha256: self.store.put_blob(&encode_png(&d.render.image)?)?,
                    warning: d.warning,
                });
            }
            s.clear_results();
            s.candidates = records.clone();
            Ok(records)
        })
    }

    pub fn select(&self, id: &str, index: usize) -> Result<DesignSession> {
        self.with_session(id, |s| {
            if index >= s.candidates.len() {
                return Err(Error::validation(format!(
                    "candidate {index} does not exist ({} generated)",
                    s.candidates.len()
                )));
            }
            if s.selected != Some(index) {
                s.selected = Some(index);
                s.edited_layout = None;
            }
            Ok(s.clone())
        })
    }

    /// Replaces boxes of the selected design after validating each one.
    pub fn edit_layout(&self, id: &str, edits: &[BoxEdit]) -> Result<Layout> {
        self.with_session(id, |s| {
            let mut layout = s
                .current_layout()
                .ok_or_else(|| Error::Conflict("select a candidate before editing".into()))?;
            for e in edits {
                let [cy, cx, h, w] = e.bbox;
                let b = NormalizedBox::try_new(cy, cx, h, w)
                    .map_err(|err| Error::validation(format!("element {}: {err}", e.element)))?;
                let slot = layout
                    .boxes_mut()
                    .get_mut(e.element)
                    .ok_or_else(|| Error::validation(format!("element {} does not exist", e.element)))?;
                *slot = b;
            }
            s.edited_layout = Some(layout.clone());
            Ok(layout)
        })
    }

    /// Re-renders the current design at the background's own resolution.
    pub fn export(&self, id: &str) -> Result<ExportResult> {
        self.with_session(id, |s| {
            let layout = s
                .current_layout()
                .ok_or_else(|| Error::Conflict("select a candidate before exporting".into()))?;
            let info = s
                .background
                .clone()
                .ok_or_else(|| Error::Conflict("session has no background".into()))?;
            let bg = self.load_background(&info)?;
            let render = render_design_lenient(&bg, &s.foreground_set(), &layout, &self.spec_for(s))?;
            let image_sha256 = self.store.put_blob(&encode_png(&render.image)?)?;
            let elements = s
                .foreground
                .iter()
                .zip(layout.boxes())
                .map(|(f, b)| AnnotationElement::text(f.class, f.string.clone(), b))
                .collect();
            Ok(ExportResult {
                image_sha256,
                record: AnnotationRecord {
                    id: s.id.clone(),
                    background_path: format!("blobs/{}", info.sha256),
                    width: info.width,
                    height: info.height,
                    elements,
                },
                warning: overflow_warning(&render.overflow),
            })
        })
    }
}

/// Texts given on the command line or in a request as `class:string`.
pub fn parse_text_arg(arg: &str) -> Result<ForegroundElement> {
    let (class, string) = arg
        .split_once(':')
        .ok_or_else(|| Error::validation(format!("expected class:text, got {arg:?}")))?;
    let req = ForegroundRequest {
        string: string.to_string(),
        class: class.to_string(),
        color: None,
    };
    let f = req.resolve()?;
    Ok(ForegroundElement::Text(TextElement::new(f.string, f.class)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn service(dir: &Path) -> DesignService {
        let model = InferenceModel::untrained(&RunConfig::tiny()).unwrap();
        let mut opts = ServiceOptions::new(dir);
        opts.fixed_seed = Some(11);
        DesignService::new(Arc::new(model), opts).unwrap()
    }

    fn png(w: u32, h: u32) -> Vec<u8> {
        encode_png(&RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 90]))).unwrap()
    }

    fn texts() -> Vec<ForegroundRequest> {
        [("header", "Big summer sale"), ("footnote", "terms apply"), ("button", "Shop")]
            .iter()
            .map(|(c, s)| ForegroundRequest {
                string: s.to_string(),
                class: c.to_string(),
                color: None,
            })
            .collect()
    }

    #[test]
    fn full_flow() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let a = svc.create_session().unwrap();
        let b = svc.create_session().unwrap();
        assert_ne!(a.id, b.id);
        assert!(a.id.bytes().all(|c| c.is_ascii_alphanumeric()));
        assert!(svc.session(&a.id).unwrap().foreground.is_empty());

        assert!(matches!(svc.generate_candidates(&a.id, None), Err(Error::Conflict(_))));
        let info = svc.put_background(&a.id, &png(300, 200)).unwrap();
        assert_eq!((info.width, info.height), (300, 200));
        let fg = svc.put_foreground(&a.id, &texts(), None).unwrap();
        assert_eq!(fg[1].class, TextClass::Disclaimer);
        assert_eq!(svc.session(&a.id).unwrap().foreground, fg);

        let cands = svc.generate_candidates(&a.id, None).unwrap();
        assert_eq!(cands.len(), DEFAULT_CANDIDATES);
        for c in &cands {
            assert_eq!(c.layout.len(), 3);
            for b in c.layout.boxes() {
                NormalizedBox::try_new(b.cy(), b.cx(), b.h(), b.w()).unwrap();
            }
            assert!(!svc.blob(&c.preview_sha256).unwrap().is_empty());
        }
        let again = svc.generate_candidates(&a.id, None).unwrap();
        assert_eq!(cands, again);

        assert!(matches!(svc.edit_layout(&a.id, &[]), Err(Error::Conflict(_))));
        assert!(matches!(svc.export(&a.id), Err(Error::Conflict(_))));
        svc.select(&a.id, 2).unwrap();
        let bad = BoxEdit { element: 0, bbox: [0.5, 0.5, 1.2, 0.3] };
        assert!(matches!(svc.edit_layout(&a.id, &[bad]), Err(Error::Validation(_))));
        let edit = BoxEdit { element: 1, bbox: [0.81234567891, 0.5, 0.05, 0.6] };
        svc.edit_layout(&a.id, &[edit]).unwrap();
        let ex = svc.export(&a.id).unwrap();
        assert_eq!(ex.record.elements[1].bbox, edit.bbox);
        assert_eq!(ex.record.elements[1].class.as_deref(), Some("disclaimer"));
        assert_eq!(svc.export(&a.id).unwrap(), ex);
        let img = image::load_from_memory(&svc.blob(&ex.image_sha256).unwrap()).unwrap();
        assert_eq!((img.width(), img.height()), (300, 200));
    }

    #[test]
    fn bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        assert!(matches!(svc.session("nope"), Err(Error::NotFound(_))));
        assert!(matches!(svc.session("../etc"), Err(Error::NotFound(_))));
        let s = svc.create_session().unwrap();
        assert!(matches!(svc.put_background(&s.id, b"not an image"), Err(Error::Validation(_))));
        let bad = vec![ForegroundRequest { string: "x".into(), class: "logo".into(), color: None }];
        assert!(matches!(svc.put_foreground(&s.id, &bad, None), Err(Error::Validation(_))));
        assert!(matches!(svc.put_foreground("missing", &texts(), None), Err(Error::NotFound(_))));
    }

    #[test]
    fn expired_sessions_disappear() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Duration::from_secs(60)).unwrap();
        let mut s = store.create().unwrap();
        s.updated_at -= 120;
        store.save(&s).unwrap();
        assert!(matches!(store.load(&s.id), Err(Error::NotFound(_))));
        let fresh = store.create().unwrap();
        assert!(store.load(&fresh.id).is_ok());
    }

    #[test]
    fn text_args() {
        assert!(matches!(parse_text_arg("header:Hello"), Ok(ForegroundElement::Text(ref t)) if t.class == TextClass::Header));
        assert!(parse_text_arg("nocolon").is_err());
        assert!(parse_text_arg("logo:x").is_err());
    }
}
