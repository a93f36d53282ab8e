//! Built-in monospace font, greedy word wrap and font-size fitting.

use font8x8::legacy::BASIC_LEGACY;

use crate::error::{Error, Result};

/// Metrics of the built-in 8×8 bitmap font scaled to `size` pixels.
///
/// Every glyph occupies a `size × size` cell, lines are separated by a
/// quarter of the size, and all ink stays inside the cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MonospaceFont;

impl MonospaceFont {
    pub fn advance(&self, size: u32) -> u32 {
        size
    }

    pub fn line_gap(&self, size: u32) -> u32 {
        size / 4
    }

    /// Width and height of a block of lines.
    pub fn measure(&self, lines: &[String], size: u32) -> (u32, u32) {
        if lines.is_empty() {
            return (0, 0);
        }
        let cols = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0) as u32;
        let n = lines.len() as u32;
        (cols * self.advance(size), n * size + (n - 1) * self.line_gap(size))
    }

    /// Glyph bitmap rows; characters outside ASCII draw as `?`.
    pub fn glyph(&self, c: char) -> [u8; 8] {
        let i = c as usize;
        if i < 128 {
            BASIC_LEGACY[i]
        } else {
            BASIC_LEGACY[b'?' as usize]
        }
    }

    /// Whether the pixel at `(px, py)` inside a `size` cell is inked.
    pub fn ink(&self, c: char, size: u32, px: u32, py: u32) -> bool {
        let g = self.glyph(c);
        let gx = (px * 8 / size).min(7);
        let gy = (py * 8 / size).min(7);
        g[gy as usize] >> gx & 1 == 1
    }
}

/// Result of fitting a string into a box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextFit {
    pub size: u32,
    pub lines: Vec<String>,
    /// Character offsets in the source string where lines 2.. begin.
    pub breaks: Vec<usize>,
}

/// Greedy wrap at spaces into lines of at most `capacity` characters. Words
/// longer than a line are split at character boundaries.
pub fn wrap(s: &str, capacity: usize) -> Option<(Vec<String>, Vec<usize>)> {
    if capacity == 0 {
        return None;
    }
    let chars: Vec<char> = s.chars().collect();
    let mut words = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        words.push((start, &chars[start..i]));
    }
    let mut lines: Vec<(usize, String)> = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    for (start, word) in words {
        if word.len() > capacity {
            if let Some(c) = cur.take() {
                lines.push(c);
            }
            let chunks: Vec<&[char]> = word.chunks(capacity).collect();
            let last = chunks.len() - 1;
            for (k, chunk) in chunks.into_iter().enumerate() {
                let item = (start + k * capacity, chunk.iter().collect::<String>());
                if k == last {
                    cur = Some(item);
                } else {
                    lines.push(item);
                }
            }
            continue;
        }
        match &mut cur {
            Some((_, line)) if line.chars().count() + 1 + word.len() <= capacity => {
                line.push(' ');
                line.extend(word.iter());
            }
            _ => {
                if let Some(c) = cur.take() {
                    lines.push(c);
                }
                cur = Some((start, word.iter().collect()));
            }
        }
    }
    if let Some(c) = cur {
        lines.push(c);
    }
    if lines.is_empty() {
        return None;
    }
    let breaks = lines.iter().skip(1).map(|(o, _)| *o).collect();
    Some((lines.into_iter().map(|(_, l)| l).collect(), breaks))
}

/// Lines for `s` at `size` if they fit a `width × height` box.
pub fn layout_at(font: &MonospaceFont, s: &str, size: u32, width: u32, height: u32) -> Option<(Vec<String>, Vec<usize>)> {
    if size == 0 {
        return None;
    }
    let capacity = (width / font.advance(size)) as usize;
    let (lines, breaks) = wrap(s, capacity)?;
    let (w, h) = font.measure(&lines, size);
    (w <= width && h <= height).then_some((lines, breaks))
}

/// Largest integer font size in `[min_size, max_size]` whose wrapped text
/// fits the box; `max_size` is additionally bounded by the box height.
///
/// `element` only labels the overflow error.
pub fn fit_text_to_box(
    font: &MonospaceFont,
    s: &str,
    width: u32,
    height: u32,
    min_size: u32,
    max_size: Option<u32>,
    element: usize,
) -> Result<TextFit> {
    if s.trim().is_empty() {
        return Err(Error::validation("text to fit is empty"));
    }
    if width == 0 || height == 0 {
        return Err(Error::Overflow { elements: vec![element] });
    }
    let min = min_size.max(1);
    let max = max_size.map_or(height, |m| m.min(height));
    let fits = |size: u32| layout_at(font, s, size, width, height);
    if max < min || fits(min).is_none() {
        return Err(Error::Overflow { elements: vec![element] });
    }
    let (mut lo, mut hi) = (min, max);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if fits(mid).is_some() {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    // wrapping can make fit non-monotone near break points; make sure the
    // answer is maximal
    while lo < max && fits(lo + 1).is_some() {
        lo += 1;
    }
    let (lines, breaks) = fits(lo).expect("checked above");
    Ok(TextFit { size: lo, lines, breaks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_greedy_and_breaks_long_words() {
        let (lines, breaks) = wrap("big summer sale", 10).unwrap();
        assert_eq!(lines, ["big summer", "sale"]);
        assert_eq!(breaks, [11]);
        let (lines, breaks) = wrap("abcdefghij xy", 4).unwrap();
        assert_eq!(lines, ["abcd", "efgh", "ij", "xy"]);
        assert_eq!(breaks, [4, 8, 11]);
        assert!(wrap("x", 0).is_none());
        assert!(wrap("   ", 3).is_none());
    }

    #[test]
    fn single_char_in_huge_box_hits_height_bound() {
        let f = MonospaceFont;
        let fit = fit_text_to_box(&f, "A", 1000, 100, 8, None, 0).unwrap();
        assert_eq!(fit.size, 100);
        let fit = fit_text_to_box(&f, "A", 1000, 100, 8, Some(40), 0).unwrap();
        assert_eq!(fit.size, 40);
    }

    #[test]
    fn empty_and_overflowing_text() {
        let f = MonospaceFont;
        assert!(matches!(fit_text_to_box(&f, "", 10, 10, 8, None, 0), Err(Error::Validation(_))));
        let err = fit_text_to_box(&f, "far too long for this", 20, 8, 8, None, 3).unwrap_err();
        assert!(matches!(err, Error::Overflow { ref elements } if elements == &[3]));
    }

    #[test]
    fn fit_is_maximal() {
        let f = MonospaceFont;
        let fit = fit_text_to_box(&f, "Shop the new collection today", 120, 60, 4, None, 0).unwrap();
        assert!(layout_at(&f, "Shop the new collection today", fit.size, 120, 60).is_some());
        assert!(layout_at(&f, "Shop the new collection today", fit.size + 1, 120, 60).is_none());
    }

    #[test]
    fn glyph_ink_stays_in_cell() {
        let f = MonospaceFont;
        let size = 13;
        let inked = (0..size).flat_map(|y| (0..size).map(move |x| (x, y))).filter(|&(x, y)| f.ink('W', size, x, y)).count();
        assert!(inked > 0);
        assert!(!f.ink(' ', size, 3, 3));
    }
}
