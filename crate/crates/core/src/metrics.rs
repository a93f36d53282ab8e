//! Realism, accuracy and regularity metrics over sets of layouts.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, Layout, NormalizedBox};
use crate::objectives::{misalignment_loss, overlap_loss};

/// Covariance ridge added before taking matrix square roots.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Maps a layout to a fixed-size feature vector.
pub trait FeatureExtractor: Send + Sync {
    fn dim(&self) -> usize;
    fn extract(&self, layout: &Layout) -> Vec<f64>;
    /// Where the features come from, recorded in every report.
    fn provenance(&self) -> String;
}

/// Frozen random two-layer box encoder with mean and max pooling. The raw
/// mean box geometry is appended so the feature map is never degenerate.
#[derive(Debug, Clone)]
pub struct SurrogateLayoutEncoder {
    seed: u64,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

const BOX_FEATURES: usize = 8;

impl SurrogateLayoutEncoder {
    pub const DEFAULT_SEED: u64 = 20_230_517;

    pub fn new(seed: u64, hidden: usize, out: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
        };
        let w1 = init(hidden, BOX_FEATURES);
        let w2 = init(out, hidden);
        let b1 = DVector::from_fn(hidden, |i, _| ((i as f64) * 0.37).sin() * 0.1);
        let b2 = DVector::zeros(out);
        Self { seed, w1, b1, w2, b2 }
    }

    fn box_input(b: &NormalizedBox) -> DVector<f64> {
        // centered to roughly zero mean
        DVector::from_vec(vec![
            b.cy() - 0.5,
            b.cx() - 0.5,
            b.h() - 0.25,
            b.w() - 0.25,
            b.top() - 0.4,
            b.left() - 0.4,
            b.bottom() - 0.6,
            b.right() - 0.6,
        ])
    }
}

impl Default for SurrogateLayoutEncoder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SEED, 64, 32)
    }
}

impl FeatureExtractor for SurrogateLayoutEncoder {
    fn dim(&self) -> usize {
        2 * self.w2.nrows() + BOX_FEATURES + 1
    }

    fn extract(&self, layout: &Layout) -> Vec<f64> {
        let out = self.w2.nrows();
        let mut mean = DVector::zeros(out);
        let mut max = DVector::from_element(out, f64::NEG_INFINITY);
        let mut raw = DVector::zeros(BOX_FEATURES);
        for b in layout.boxes() {
            let x = Self::box_input(b);
            let h = (&self.w1 * &x + &self.b1).map(f64::tanh);
            let f = (&self.w2 * h + &self.b2).map(f64::tanh);
            mean += &f;
            max = max.zip_map(&f, f64::max);
            raw += x;
        }
        let n = layout.len().max(1) as f64;
        if layout.is_empty() {
            max.fill(0.0);
        }
        mean /= n;
        raw /= n;
        mean.iter()
            .chain(max.iter())
            .chain(raw.iter())
            .copied()
            .chain(std::iter::once(layout.len() as f64 / 16.0))
            .collect()
    }

    fn provenance(&self) -> String {
        format!("surrogate(seed={})", self.seed)
    }
}

fn moments(set: &[Vec<f64>], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let mut mu = DVector::zeros(dim);
    for v in set {
        mu += DVector::from_column_slice(v);
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    if n > 1 {
        for v in set {
            let d = DVector::from_column_slice(v) - &mu;
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;
    }
    (mu, cov)
}

fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two feature sets.
pub fn frechet_distance(set1: &[Vec<f64>], set2: &[Vec<f64>]) -> Result<f64> {
    if set1.is_empty() || set2.is_empty() {
        return Err(Error::validation("frechet_distance needs non-empty sets"));
    }
    let dim = set1[0].len();
    if let Some(bad) = set1.iter().chain(set2).find(|v| v.len() != dim) {
        return Err(Error::shape(format!(
            "feature of length {} in a set of dimension {dim}",
            bad.len()
        )));
    }
    let (mu1, c1) = moments(set1, dim);
    let (mu2, c2) = moments(set2, dim);
    let ridge = DMatrix::identity(dim, dim) * COVARIANCE_RIDGE;
    let c1 = c1 + &ridge;
    let c2 = c2 + &ridge;
    // Tr((C1 C2)^1/2) = Tr((S1 C2 S1)^1/2) with S1 = C1^1/2
    let s1 = psd_sqrt(c1.clone());
    let cross = psd_sqrt(&s1 * &c2 * &s1).trace();
    let d = (mu1 - mu2).norm_squared() + c1.trace() + c2.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

pub fn layout_fid(fake: &[Layout], real: &[Layout], fx: &dyn FeatureExtractor) -> Result<f64> {
    if fake.is_empty() || real.is_empty() {
        return Err(Error::validation("layout_fid needs non-empty sets"));
    }
    let f: Vec<_> = fake.iter().map(|l| fx.extract(l)).collect();
    let r: Vec<_> = real.iter().map(|l| fx.extract(l)).collect();
    frechet_distance(&f, &r)
}

fn check_matched(fake: &Layout, real: &Layout) -> Result<()> {
    if fake.len() != real.len() {
        return Err(Error::shape(format!(
            "layouts of {} and {} boxes cannot be matched",
            fake.len(),
            real.len()
        )));
    }
    Ok(())
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn mean_layout_iou(fake: &Layout, real: &Layout) -> Result<f64> {
    check_matched(fake, real)?;
    Ok(mean_of(fake.boxes().iter().zip(real.boxes()).map(|(a, b)| box_iou(a, b))))
}

fn docsim_pair(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    let shape = (a.w().min(b.w()) * a.h().min(b.h()) / (a.w() * a.h()).max(b.w() * b.h()).max(1e-12)).sqrt();
    let dc = ((a.cx() - b.cx()).powi(2) + (a.cy() - b.cy()).powi(2)).sqrt();
    let ds = (a.w() - b.w()).abs() + (a.h() - b.h()).abs();
    shape * 2f64.powf(-dc - 2.0 * ds)
}

pub fn docsim(fake: &Layout, real: &Layout) -> Result<f64> {
    check_matched(fake, real)?;
    Ok(mean_of(fake.boxes().iter().zip(real.boxes()).map(|(a, b)| docsim_pair(a, b))))
}

fn require_non_empty(layouts: &[Layout]) -> Result<()> {
    if layouts.is_empty() {
        return Err(Error::validation("metric over an empty layout set"));
    }
    Ok(())
}

pub fn overlap_metric(layouts: &[Layout]) -> Result<f64> {
    require_non_empty(layouts)?;
    Ok(mean_of(layouts.iter().map(overlap_loss)))
}

/// Mean per-layout misalignment in internal units; multiply by 100 for display.
pub fn misalignment_metric(layouts: &[Layout]) -> Result<f64> {
    require_non_empty(layouts)?;
    Ok(mean_of(layouts.iter().map(misalignment_loss)))
}

/// Scale between internal misalignment values and the ×10⁻² display column.
pub const MISALIGNMENT_DISPLAY_SCALE: f64 = 100.0;

pub fn misalignment_for_display(internal: f64) -> f64 {
    internal * MISALIGNMENT_DISPLAY_SCALE
}

/// Metric set in internal units. Serialization writes misalignment in the
/// ×10⁻² display convention.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub layout_fid: f64,
    pub image_fid: Option<f64>,
    pub mean_iou: f64,
    pub docsim: f64,
    pub overlap: f64,
    pub misalignment: f64,
    pub sample_count: usize,
    pub extractor: String,
}

#[derive(Serialize, Deserialize)]
struct MetricRecord {
    layout_fid: f64,
    image_fid: Option<f64>,
    iou: f64,
    docsim: f64,
    overlap: f64,
    #[serde(rename = "misalign_x1e-2")]
    misalign: f64,
    sample_count: usize,
    extractor: String,
}

impl Serialize for MetricReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MetricRecord {
            layout_fid: self.layout_fid,
            image_fid: self.image_fid,
            iou: self.mean_iou,
            docsim: self.docsim,
            overlap: self.overlap,
            misalign: misalignment_for_display(self.misalignment),
            sample_count: self.sample_count,
            extractor: self.extractor.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MetricRecord::deserialize(d)?;
        Ok(Self {
            layout_fid: r.layout_fid,
            image_fid: r.image_fid,
            mean_iou: r.iou,
            docsim: r.docsim,
            overlap: r.overlap,
            misalignment: r.misalign / MISALIGNMENT_DISPLAY_SCALE,
            sample_count: r.sample_count,
            extractor: r.extractor,
        })
    }
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 6] = [
        "Layout FID",
        "Image FID",
        "IoU",
        "DocSim",
        "Overlap",
        "Misalign (x1e-2)",
    ];

    /// Display values in column order.
    pub fn row(&self) -> [String; 6] {
        [
            format!("{:.2}", self.layout_fid),
            self.image_fid.map_or_else(|| "-".to_string(), |v| format!("{v:.2}")),
            format!("{:.3}", self.mean_iou),
            format!("{:.3}", self.docsim),
            format!("{:.3}", self.overlap),
            format!("{:.3}", misalignment_for_display(self.misalignment)),
        ]
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = self.row();
        let widths: Vec<usize> = Self::COLUMNS
            .iter()
            .zip(&row)
            .map(|(c, v)| c.len().max(v.len()))
            .collect();
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        writeln!(f, "{}", line(Self::COLUMNS.to_vec()))?;
        writeln!(f, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"))?;
        write!(f, "{}", line(row.iter().map(String::as_str).collect()))
    }
}

/// All metrics for generated layouts against their matched ground truth.
pub fn evaluate(fake: &[Layout], real: &[Layout], fx: &dyn FeatureExtractor) -> Result<MetricReport> {
    if fake.len() != real.len() {
        return Err(Error::shape(format!(
            "{} generated layouts for {} references",
            fake.len(),
            real.len()
        )));
    }
    require_non_empty(fake)?;
    let ious = fake
        .iter()
        .zip(real)
        .map(|(a, b)| mean_layout_iou(a, b))
        .collect::<Result<Vec<_>>>()?;
    let sims = fake
        .iter()
        .zip(real)
        .map(|(a, b)| docsim(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        layout_fid: layout_fid(fake, real, fx)?,
        image_fid: None,
        mean_iou: mean_of(ious.into_iter()),
        docsim: mean_of(sims.into_iter()),
        overlap: overlap_metric(fake)?,
        misalignment: misalignment_metric(fake)?,
        sample_count: fake.len(),
        extractor: fx.provenance(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(b: &[[f64; 4]]) -> Layout {
        Layout::from_arrays(b)
    }

    #[test]
    fn frechet_self_is_zero_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let b: Vec<Vec<f64>> = (0..150).map(|_| (0..5).map(|_| rng.random::<f64>() * 2.0).collect()).collect();
        assert!(frechet_distance(&a, &a).unwrap() < 1e-6);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9 * ab.max(1.0));
        assert!(frechet_distance(&a, &[vec![0.0; 4]]).is_err());
    }

    #[test]
    fn iou_and_docsim_examples() {
        let a = layout(&[[0.5, 0.25, 1.0, 0.5], [0.5, 0.25, 1.0, 0.5]]);
        let b = layout(&[[0.5, 0.25, 1.0, 0.5], [0.5, 0.5, 1.0, 0.5]]);
        assert_eq!(mean_layout_iou(&a, &a).unwrap(), 1.0);
        assert!((mean_layout_iou(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let c = layout(&[[0.25, 0.25, 0.5, 0.5]]);
        let d = layout(&[[0.75, 0.75, 0.5, 0.5]]);
        assert_eq!(mean_layout_iou(&c, &d).unwrap(), 0.0);
        assert_eq!(docsim(&a, &a).unwrap(), 1.0);
        let e = layout(&[[0.5, 0.1, 0.2, 0.2]]);
        let f = layout(&[[0.5, 0.9, 0.2, 0.2]]);
        // center gap 0.8 with equal shapes
        assert!((docsim(&e, &f).unwrap() - 2f64.powf(-0.8)).abs() < 1e-12);
        assert!(mean_layout_iou(&a, &c).is_err());
    }

    #[test]
    fn docsim_center_shift_of_one() {
        // a unit center shift needs boxes on opposite corners of the canvas
        let a = NormalizedBox::new(0.5, 0.0, 0.2, 0.2);
        let b = NormalizedBox::new(0.5, 1.0, 0.2, 0.2);
        assert!((docsim_pair(&a, &b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regularity_metrics() {
        let single = vec![layout(&[[0.5, 0.5, 0.2, 0.2]]); 3];
        assert_eq!(overlap_metric(&single).unwrap(), 0.0);
        assert_eq!(misalignment_metric(&single).unwrap(), 0.0);
        let one = layout(&[[0.5, 0.5, 0.2, 0.2], [0.55, 0.52, 0.2, 0.2]]);
        assert_eq!(overlap_metric(std::slice::from_ref(&one)).unwrap(), overlap_loss(&one));
        assert!(overlap_metric(&[]).is_err());
    }

    #[test]
    fn misalignment_display_scale() {
        assert!((misalignment_for_display(0.00646) - 0.646).abs() < 1e-12);
        let r = MetricReport {
            layout_fid: 3.19,
            image_fid: None,
            mean_iou: 0.208,
            docsim: 0.151,
            overlap: 0.101,
            misalignment: 0.00646,
            sample_count: 1,
            extractor: "x".into(),
        };
        let json = serde_json::to_value(&r).unwrap();
        assert!((json["misalign_x1e-2"].as_f64().unwrap() - 0.646).abs() < 1e-12);
        let back: MetricReport = serde_json::from_value(json).unwrap();
        assert!((back.misalignment - 0.00646).abs() < 1e-15);
        let table = r.to_string();
        assert!(table.contains("0.646"));
        let header = table.lines().next().unwrap();
        let pos: Vec<usize> = MetricReport::COLUMNS.iter().map(|c| header.find(c).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn surrogate_is_deterministic() {
        let l = layout(&[[0.3, 0.4, 0.2, 0.5], [0.7, 0.4, 0.1, 0.3]]);
        let a = SurrogateLayoutEncoder::default();
        let b = SurrogateLayoutEncoder::default();
        assert_eq!(a.extract(&l), b.extract(&l));
        assert_eq!(a.extract(&l).len(), a.dim());
    }
}
