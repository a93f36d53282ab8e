//! Random box perturbation that keeps alignment groups and non-overlap.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{alignment_deltas, Layout, NormalizedBox, EPS_BOX};
use crate::objectives::overlap_loss;

/// Two boxes are aligned on a relation when its delta is below this.
pub const ALIGN_TOL: f64 = 1e-3;

/// Halvings of the jitter fraction tried before giving up and returning the
/// input unchanged.
const MAX_ATTEMPTS: usize = 8;

/// Every `(i, j, relation)` with `i < j` whose alignment delta is below
/// [`ALIGN_TOL`]. Relations are indexed as in `AlignmentDeltas::to_array`.
pub fn alignment_structure(layout: &Layout) -> BTreeSet<(usize, usize, usize)> {
    let b = layout.boxes();
    let mut out = BTreeSet::new();
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            for (k, d) in alignment_deltas(&b[i], &b[j]).to_array().into_iter().enumerate() {
                if d < ALIGN_TOL {
                    out.insert((i, j, k));
                }
            }
        }
    }
    out
}

/// Connected components of the "aligned on relation `k`" graph.
fn groups(layout: &Layout, k: usize) -> Vec<Vec<usize>> {
    let n = layout.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, j, rel) in alignment_structure(layout) {
        if rel == k {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = out.len();
            out.push(Vec::new());
        }
        out[root_slot[r]].push(i);
    }
    out.retain(|g| g.len() > 1);
    out
}

/// One axis of a box as `(low edge, high edge)`.
type Span = (f64, f64);

/// Snaps every alignment group on one axis to the mean of its members'
/// jittered values. `rels` are the relation indices for low/center/high.
fn snap_axis(original: &Layout, spans: &mut [Span], rels: [usize; 3]) -> bool {
    let n = spans.len();
    let mut fixed: Vec<[Option<f64>; 3]> = vec![[None; 3]; n];
    for (slot, &rel) in rels.iter().enumerate() {
        for g in groups(original, rel) {
            let value = |s: &Span| match slot {
                0 => s.0,
                1 => (s.0 + s.1) / 2.0,
                _ => s.1,
            };
            let target = g.iter().map(|&i| value(&spans[i])).sum::<f64>() / g.len() as f64;
            for &i in &g {
                fixed[i][slot] = Some(target);
            }
        }
    }
    for (s, f) in spans.iter_mut().zip(&fixed) {
        let size = s.1 - s.0;
        *s = match *f {
            [Some(lo), _, Some(hi)] => (lo, hi),
            [Some(lo), Some(c), None] => (lo, 2.0 * c - lo),
            [None, Some(c), Some(hi)] => (2.0 * c - hi, hi),
            [Some(lo), None, None] => (lo, lo + size),
            [None, Some(c), None] => (c - size / 2.0, c + size / 2.0),
            [None, None, Some(hi)] => (hi - size, hi),
            [None, None, None] => *s,
        };
        if !(s.1 - s.0 >= EPS_BOX) {
            return false;
        }
    }
    true
}

fn to_box(x: Span, y: Span) -> Option<NormalizedBox> {
    NormalizedBox::try_new((y.0 + y.1) / 2.0, (x.0 + x.1) / 2.0, y.1 - y.0, x.1 - x.0).ok()
}

fn intersects(a: (Span, Span), b: (Span, Span)) -> bool {
    a.0 .0 < b.0 .1 && b.0 .0 < a.0 .1 && a.1 .0 < b.1 .1 && b.1 .0 < a.1 .1
}

/// Shrinks pairs that did not overlap before but do now, splitting the
/// overlap along its thinner axis.
fn resolve_overlaps(original: &Layout, xs: &mut [Span], ys: &mut [Span]) {
    let ob = original.boxes();
    let span = |b: &NormalizedBox| ((b.left(), b.right()), (b.top(), b.bottom()));
    for _pass in 0..4 {
        let mut changed = false;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                if intersects(span(&ob[i]), span(&ob[j])) || !intersects((xs[i], ys[i]), (xs[j], ys[j])) {
                    continue;
                }
                let px = xs[i].1.min(xs[j].1) - xs[i].0.max(xs[j].0);
                let py = ys[i].1.min(ys[j].1) - ys[i].0.max(ys[j].0);
                let axis = if px <= py { &mut *xs } else { &mut *ys };
                let (first, second) = if axis[i].0 + axis[i].1 <= axis[j].0 + axis[j].1 { (i, j) } else { (j, i) };
                let mid = (axis[first].1 + axis[second].0) / 2.0;
                axis[first].1 = mid.min(axis[first].1);
                axis[second].0 = mid.max(axis[second].0);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

fn attempt(layout: &Layout, fraction: f64, rng: &mut ChaCha8Rng) -> Option<Layout> {
    let mut xs = Vec::with_capacity(layout.len());
    let mut ys = Vec::with_capacity(layout.len());
    for b in layout.boxes() {
        let mut u = || rng.random_range(-1.0..=1.0) * fraction;
        let cx = b.cx() + u() * b.w();
        let cy = b.cy() + u() * b.h();
        let w = b.w() * (1.0 + u());
        let h = b.h() * (1.0 + u());
        xs.push((cx - w / 2.0, cx + w / 2.0));
        ys.push((cy - h / 2.0, cy + h / 2.0));
    }
    if !snap_axis(layout, &mut xs, [0, 1, 2]) || !snap_axis(layout, &mut ys, [3, 4, 5]) {
        return None;
    }
    resolve_overlaps(layout, &mut xs, &mut ys);
    let boxes = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| to_box(x, y))
        .collect::<Option<Vec<_>>>()?;
    let out = Layout::with_ids(boxes, layout.element_ids().to_vec()).ok()?;
    let keeps_structure = alignment_structure(&out) == alignment_structure(layout);
    let keeps_overlap = overlap_loss(&out) <= overlap_loss(layout) + 1e-9;
    (keeps_structure && keeps_overlap).then_some(out)
}

/// Jittered layout plus the fraction that was finally applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Jittered {
    pub layout: Layout,
    /// The requested fraction, a halving of it, or 0 when every attempt
    /// broke the layout's regularity.
    pub applied_fraction: f64,
}

/// Perturbs every box by up to `fraction` of its own size, then restores the
/// input's alignment groups and removes newly created overlaps. Attempts that
/// still change the alignment structure or raise the overlap loss are
/// retried with half the fraction.
pub fn jitter_layout_detailed(layout: &Layout, fraction: f64, seed: u64) -> Result<Jittered> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::validation(format!("jitter fraction {fraction} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = fraction;
    if f > 0.0 {
        for _ in 0..MAX_ATTEMPTS {
            if let Some(out) = attempt(layout, f, &mut rng) {
                return Ok(Jittered {
                    layout: out,
                    applied_fraction: f,
                });
            }
            f /= 2.0;
        }
    }
    Ok(Jittered {
        layout: layout.clone(),
        applied_fraction: 0.0,
    })
}

pub fn jitter_layout(layout: &Layout, fraction: f64, seed: u64) -> Result<Layout> {
    Ok(jitter_layout_detailed(layout, fraction, seed)?.layout)
}

/// Sets every box's horizontal center to the mean center.
pub fn enforce_center_alignment(layout: &Layout) -> Layout {
    if layout.is_empty() {
        return layout.clone();
    }
    let mean = layout.boxes().iter().map(|b| b.cx()).sum::<f64>() / layout.len() as f64;
    layout.map_boxes(|b| NormalizedBox::new(b.cy(), mean, b.h(), b.w()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column() -> Layout {
        Layout::from_arrays(&[[0.2, 0.5, 0.1, 0.6], [0.45, 0.5, 0.08, 0.4], [0.7, 0.5, 0.1, 0.3]])
    }

    #[test]
    fn zero_fraction_is_identity() {
        let l = column();
        assert_eq!(jitter_layout(&l, 0.0, 1).unwrap(), l);
        assert!(jitter_layout(&l, 1.0, 1).is_err());
        assert!(jitter_layout(&l, -0.1, 1).is_err());
    }

    #[test]
    fn jitter_moves_boxes_but_keeps_groups() {
        let l = column();
        let j = jitter_layout_detailed(&l, 0.2, 7).unwrap();
        assert!(j.applied_fraction > 0.0);
        assert_ne!(j.layout, l);
        assert_eq!(alignment_structure(&j.layout), alignment_structure(&l));
        assert!(overlap_loss(&j.layout) <= overlap_loss(&l) + 1e-9);
        assert_eq!(jitter_layout(&l, 0.2, 7).unwrap(), j.layout);
        assert_ne!(jitter_layout(&l, 0.2, 8).unwrap(), j.layout);
    }

    #[test]
    fn center_alignment_uses_the_mean() {
        let l = Layout::from_arrays(&[[0.3, 0.4, 0.1, 0.2], [0.6, 0.6, 0.1, 0.2]]);
        let out = enforce_center_alignment(&l);
        for b in out.boxes() {
            assert!((b.cx() - 0.5).abs() < 1e-15);
        }
        assert_eq!(out.boxes()[0].cy(), 0.3);
        assert_eq!(out.boxes()[1].h(), 0.1);
        let c = column();
        assert_eq!(enforce_center_alignment(&c), c);
    }
}
