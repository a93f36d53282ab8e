//! Normalized box parameterization and pairwise box geometry.
//!
//! Boxes are stored as `(cy, cx, h, w)` fractions of the background height and
//! width. Edge coordinates are always derived on demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible normalized height or width.
pub const EPS_BOX: f64 = 1e-4;

/// A bounding box in normalized center/size form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct NormalizedBox {
    cy: f64,
    cx: f64,
    h: f64,
    w: f64,
}

impl NormalizedBox {
    /// Builds a box, clamping every parameter into `[0, 1]` and the size to at
    /// least [`EPS_BOX`]. Non-finite inputs are treated as zero.
    pub fn new(cy: f64, cx: f64, h: f64, w: f64) -> Self {
        let unit = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        Self {
            cy: unit(cy),
            cx: unit(cx),
            h: unit(h).max(EPS_BOX),
            w: unit(w).max(EPS_BOX),
        }
    }

    /// Builds a box without clamping, rejecting anything outside the invariants.
    pub fn try_new(cy: f64, cx: f64, h: f64, w: f64) -> Result<Self> {
        let params = [("cy", cy), ("cx", cx), ("h", h), ("w", w)];
        for (name, v) in params {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("box {name}={v} outside [0, 1]")));
            }
        }
        if h < EPS_BOX || w < EPS_BOX {
            return Err(Error::validation(format!(
                "box size ({h}, {w}) below minimum {EPS_BOX}"
            )));
        }
        Ok(Self { cy, cx, h, w })
    }

    /// Builds a box from edge coordinates `(top, left, bottom, right)`.
    pub fn from_edges(top: f64, left: f64, bottom: f64, right: f64) -> Self {
        Self::new(
            (top + bottom) / 2.0,
            (left + right) / 2.0,
            bottom - top,
            right - left,
        )
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn area(&self) -> f64 {
        self.h * self.w
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cy, self.cx, self.h, self.w]
    }
}

impl From<NormalizedBox> for [f64; 4] {
    fn from(b: NormalizedBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 4]> for NormalizedBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::try_new(v[0], v[1], v[2], v[3])
    }
}

/// Pixel-space box `(y, x, h, w)` with `y, x` the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub y: i64,
    pub x: i64,
    pub h: i64,
    pub w: i64,
}

impl PixelBox {
    pub fn top(&self) -> i64 {
        self.y - self.h / 2
    }

    pub fn left(&self) -> i64 {
        self.x - self.w / 2
    }
}

fn check_dims(height: f64, width: f64) -> Result<()> {
    if !(height > 0.0 && width > 0.0) {
        return Err(Error::Dimension(format!(
            "image size must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

/// Normalizes a pixel box `(y, x, h, w)` by the image size.
pub fn normalize_box(y: f64, x: f64, h: f64, w: f64, height: f64, width: f64) -> Result<NormalizedBox> {
    check_dims(height, width)?;
    Ok(NormalizedBox::new(y / height, x / width, h / height, w / width))
}

/// Maps a normalized box back to integer pixels, rounding half up. Sizes are
/// floored at one pixel.
pub fn denormalize_box(b: &NormalizedBox, height: u32, width: u32) -> Result<PixelBox> {
    check_dims(height as f64, width as f64)?;
    let round = |v: f64| (v + 0.5).floor() as i64;
    let (hf, wf) = (height as f64, width as f64);
    Ok(PixelBox {
        y: round(b.cy * hf),
        x: round(b.cx * wf),
        h: round(b.h * hf).max(1),
        w: round(b.w * wf).max(1),
    })
}

fn intersection(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    ih * iw
}

/// Area measured from the derived edges, so a box intersected with itself
/// gives exactly its own area.
fn edge_area(b: &NormalizedBox) -> f64 {
    (b.bottom() - b.top()) * (b.right() - b.left())
}

/// Intersection over union; zero for disjoint boxes.
pub fn box_iou(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    let inter = intersection(a, b);
    let union = edge_area(a) + edge_area(b) - inter;
    inter / union
}

/// Generalized IoU: IoU minus the empty fraction of the smallest enclosing box.
pub fn box_giou(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    let inter = intersection(a, b);
    let union = edge_area(a) + edge_area(b) - inter;
    let hull_h = a.bottom().max(b.bottom()) - a.top().min(b.top());
    let hull_w = a.right().max(b.right()) - a.left().min(b.left());
    let hull = hull_h * hull_w;
    inter / union - (hull - union) / hull
}

/// Fraction of `a` covered by `b`. Asymmetric on purpose.
pub fn overlap_fraction(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    intersection(a, b) / edge_area(a)
}

/// Absolute differences for the six alignment relations between two boxes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlignmentDeltas {
    pub left: f64,
    pub center_x: f64,
    pub right: f64,
    pub top: f64,
    pub center_y: f64,
    pub bottom: f64,
}

impl AlignmentDeltas {
    pub fn to_array(self) -> [f64; 6] {
        [
            self.left,
            self.center_x,
            self.right,
            self.top,
            self.center_y,
            self.bottom,
        ]
    }

    pub fn min(&self) -> f64 {
        self.to_array().into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub fn alignment_deltas(a: &NormalizedBox, b: &NormalizedBox) -> AlignmentDeltas {
    AlignmentDeltas {
        left: (a.left() - b.left()).abs(),
        center_x: (a.cx - b.cx).abs(),
        right: (a.right() - b.right()).abs(),
        top: (a.top() - b.top()).abs(),
        center_y: (a.cy - b.cy).abs(),
        bottom: (a.bottom() - b.bottom()).abs(),
    }
}

/// An ordered set of boxes, one per foreground element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    boxes: Vec<NormalizedBox>,
    element_ids: Vec<u32>,
}

impl Layout {
    /// Layout whose element ids are the positions `0..n`.
    pub fn new(boxes: Vec<NormalizedBox>) -> Self {
        let element_ids = (0..boxes.len() as u32).collect();
        Self { boxes, element_ids }
    }

    pub fn with_ids(boxes: Vec<NormalizedBox>, element_ids: Vec<u32>) -> Result<Self> {
        if boxes.len() != element_ids.len() {
            return Err(Error::shape(format!(
                "{} boxes but {} element ids",
                boxes.len(),
                element_ids.len()
            )));
        }
        let mut seen = element_ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("duplicate element id in layout"));
        }
        Ok(Self { boxes, element_ids })
    }

    pub fn from_arrays(params: &[[f64; 4]]) -> Self {
        Self::new(
            params
                .iter()
                .map(|p| NormalizedBox::new(p[0], p[1], p[2], p[3]))
                .collect(),
        )
    }

    pub fn boxes(&self) -> &[NormalizedBox] {
        &self.boxes
    }

    pub fn boxes_mut(&mut self) -> &mut [NormalizedBox] {
        &mut self.boxes
    }

    pub fn element_ids(&self) -> &[u32] {
        &self.element_ids
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn to_arrays(&self) -> Vec<[f64; 4]> {
        self.boxes.iter().map(|b| b.to_array()).collect()
    }

    /// Applies `f` to every box, keeping ids.
    pub fn map_boxes(&self, f: impl FnMut(&NormalizedBox) -> NormalizedBox) -> Self {
        Self {
            boxes: self.boxes.iter().map(f).collect(),
            element_ids: self.element_ids.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-12, "{a} != {b}");
    }

    fn unit_left_half() -> NormalizedBox {
        NormalizedBox::from_edges(0.0, 0.0, 1.0, 0.5)
    }

    fn unit_middle_half() -> NormalizedBox {
        NormalizedBox::from_edges(0.0, 0.25, 1.0, 0.75)
    }

    #[test]
    fn normalize_examples() {
        let b = normalize_box(128.0, 128.0, 64.0, 64.0, 256.0, 256.0).unwrap();
        assert_eq!(b.to_array(), [0.5, 0.5, 0.25, 0.25]);
        let b = normalize_box(128.0, 64.0, 32.0, 192.0, 256.0, 512.0).unwrap();
        assert_eq!(b.to_array(), [0.5, 0.125, 0.125, 0.375]);
        let b = normalize_box(0.0, 0.0, 0.0, 0.0, 256.0, 256.0).unwrap();
        assert_eq!(b.to_array(), [0.0, 0.0, EPS_BOX, EPS_BOX]);
    }

    #[test]
    fn normalize_rejects_bad_dims() {
        assert!(matches!(
            normalize_box(1.0, 1.0, 1.0, 1.0, 0.0, 10.0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            normalize_box(1.0, 1.0, 1.0, 1.0, 10.0, -3.0),
            Err(Error::Dimension(_))
        ));
        let b = NormalizedBox::new(0.5, 0.5, 0.5, 0.5);
        assert!(matches!(denormalize_box(&b, 0, 4), Err(Error::Dimension(_))));
    }

    #[test]
    fn denormalize_examples() {
        let b = NormalizedBox::new(0.5, 0.5, 0.25, 0.25);
        assert_eq!(
            denormalize_box(&b, 256, 256).unwrap(),
            PixelBox { y: 128, x: 128, h: 64, w: 64 }
        );
        let b = NormalizedBox::new(1.0, 1.0, EPS_BOX, EPS_BOX);
        assert_eq!(
            denormalize_box(&b, 100, 100).unwrap(),
            PixelBox { y: 100, x: 100, h: 1, w: 1 }
        );
    }

    #[test]
    fn iou_examples() {
        let a = NormalizedBox::new(0.25, 0.25, 0.5, 0.5);
        let b = NormalizedBox::new(0.75, 0.75, 0.5, 0.5);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &b), 0.0);
        assert_close(box_iou(&unit_left_half(), &unit_middle_half()), 1.0 / 3.0);
    }

    #[test]
    fn giou_examples() {
        let a = NormalizedBox::new(0.25, 0.25, 0.5, 0.5);
        let b = NormalizedBox::new(0.75, 0.75, 0.5, 0.5);
        assert_eq!(box_giou(&a, &a), 1.0);
        assert_close(box_giou(&a, &b), -0.5);
        assert_close(box_giou(&unit_left_half(), &unit_middle_half()), 1.0 / 3.0);
    }

    #[test]
    fn overlap_fraction_examples() {
        let a = NormalizedBox::new(0.25, 0.25, 0.5, 0.5);
        let b = NormalizedBox::new(0.75, 0.75, 0.5, 0.5);
        assert_eq!(overlap_fraction(&a, &b), 0.0);
        assert_eq!(overlap_fraction(&a, &a), 1.0);
        assert_close(overlap_fraction(&unit_left_half(), &unit_middle_half()), 0.5);
        // asymmetric: a small box inside a large one is fully covered
        let big = NormalizedBox::new(0.5, 0.5, 0.8, 0.8);
        let small = NormalizedBox::new(0.5, 0.5, 0.1, 0.1);
        assert_close(overlap_fraction(&small, &big), 1.0);
        assert_close(overlap_fraction(&big, &small), 0.01 / 0.64);
    }

    #[test]
    fn alignment_examples() {
        let a = NormalizedBox::new(0.3, 0.4, 0.2, 0.3);
        assert_eq!(alignment_deltas(&a, &a).to_array(), [0.0; 6]);

        let a = NormalizedBox::from_edges(0.1, 0.1, 0.2, 0.4);
        let b = NormalizedBox::from_edges(0.5, 0.1, 0.7, 0.3);
        assert_close(alignment_deltas(&a, &b).left, 0.0);

        let b = NormalizedBox::from_edges(0.5, 0.13, 0.7, 0.3);
        let d = alignment_deltas(&a, &b);
        assert_close(d.left, 0.03);
        assert_close(d.min(), 0.03);
    }

    #[test]
    fn try_new_rejects_out_of_range() {
        assert!(NormalizedBox::try_new(0.5, 0.5, 1.5, 0.2).is_err());
        assert!(NormalizedBox::try_new(0.5, 0.5, 0.0, 0.2).is_err());
        assert!(NormalizedBox::try_new(f64::NAN, 0.5, 0.1, 0.2).is_err());
        assert!(NormalizedBox::try_new(0.5, 0.5, 0.1, 0.2).is_ok());
    }

    #[test]
    fn layout_ids_must_be_unique() {
        let b = NormalizedBox::new(0.5, 0.5, 0.1, 0.1);
        assert!(Layout::with_ids(vec![b, b], vec![3, 3]).is_err());
        assert!(Layout::with_ids(vec![b, b], vec![3]).is_err());
        assert_eq!(Layout::with_ids(vec![b, b], vec![3, 1]).unwrap().element_ids(), &[3, 1]);
    }

    #[test]
    fn box_serializes_as_array() {
        let b = NormalizedBox::new(0.5, 0.25, 0.125, 0.5);
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, "[0.5,0.25,0.125,0.5]");
        assert!(serde_json::from_str::<NormalizedBox>("[0.5,0.25,1.5,0.5]").is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn any_box() -> impl Strategy<Value = NormalizedBox> {
            (0.0..1.0f64, 0.0..1.0f64, 0.01..1.0f64, 0.01..1.0f64)
                .prop_map(|(cy, cx, h, w)| NormalizedBox::new(cy, cx, h, w))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn iou_and_giou_symmetric(a in any_box(), b in any_box()) {
                prop_assert!((box_iou(&a, &b) - box_iou(&b, &a)).abs() < 1e-12);
                prop_assert!((box_giou(&a, &b) - box_giou(&b, &a)).abs() < 1e-12);
            }

            #[test]
            fn giou_bounded_by_iou(a in any_box(), b in any_box()) {
                let (iou, giou) = (box_iou(&a, &b), box_giou(&a, &b));
                prop_assert!(giou <= iou + 1e-12);
                prop_assert!(giou > -1.0 && giou <= 1.0);
                prop_assert!((0.0..=1.0).contains(&iou));
            }

            #[test]
            fn giou_self_is_one(a in any_box()) {
                prop_assert_eq!(box_giou(&a, &a), 1.0);
            }

            #[test]
            fn round_trip_within_one_pixel(
                y in 0.0..512.0f64, x in 0.0..640.0f64,
                h in 1.0..512.0f64, w in 1.0..640.0f64,
            ) {
                let b = normalize_box(y, x, h, w, 512.0, 640.0).unwrap();
                let p = denormalize_box(&b, 512, 640).unwrap();
                prop_assert!((p.y as f64 - y).abs() <= 1.0);
                prop_assert!((p.x as f64 - x).abs() <= 1.0);
                prop_assert!((p.h as f64 - h).abs() <= 1.0);
                prop_assert!((p.w as f64 - w).abs() <= 1.0);
            }
        }
    }
}
