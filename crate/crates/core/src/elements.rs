//! Multimodal conditioning inputs: background image, text and image elements.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Layout;

/// The four annotated text categories. Logos are annotated as headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextClass {
    Header,
    Body,
    Disclaimer,
    Button,
}

impl TextClass {
    pub const ALL: [TextClass; 4] = [
        TextClass::Header,
        TextClass::Body,
        TextClass::Disclaimer,
        TextClass::Button,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::validation(format!("unknown text class index {i}")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TextClass::Header => "header",
            TextClass::Body => "body",
            TextClass::Disclaimer => "disclaimer",
            TextClass::Button => "button",
        }
    }

    /// Accepts the user-facing labels of the design studio in addition to the
    /// canonical names (`footnote` is shown for disclaimers).
    pub fn from_ui_label(label: &str) -> Result<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "footnote" | "footnote/disclaimer" | "disclaimer/footnote" => Ok(TextClass::Disclaimer),
            "body text" => Ok(TextClass::Body),
            "header text" => Ok(TextClass::Header),
            "button text" => Ok(TextClass::Button),
            other => other.parse(),
        }
    }
}

impl FromStr for TextClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "header" => Ok(TextClass::Header),
            "body" => Ok(TextClass::Body),
            "disclaimer" => Ok(TextClass::Disclaimer),
            "button" => Ok(TextClass::Button),
            other => Err(Error::validation(format!(
                "unknown text class {other:?} (expected header, body, disclaimer or button)"
            ))),
        }
    }
}

impl fmt::Display for TextClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextElement {
    pub string: String,
    pub class: TextClass,
}

impl TextElement {
    pub fn new(string: impl Into<String>, class: TextClass) -> Self {
        Self {
            string: string.into(),
            class,
        }
    }

    /// Character count of the string.
    pub fn length(&self) -> usize {
        self.string.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageElement {
    patch: RgbImage,
}

impl ImageElement {
    pub fn new(patch: RgbImage) -> Result<Self> {
        if patch.width() == 0 || patch.height() == 0 {
            return Err(Error::validation("image element has an empty patch"));
        }
        Ok(Self { patch })
    }

    pub fn patch(&self) -> &RgbImage {
        &self.patch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForegroundElement {
    Text(TextElement),
    Image(ImageElement),
}

impl ForegroundElement {
    pub fn as_text(&self) -> Option<&TextElement> {
        match self {
            ForegroundElement::Text(t) => Some(t),
            ForegroundElement::Image(_) => None,
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self, ForegroundElement::Text(_))
    }
}

/// Ordered foreground elements; element `i` owns box `i` of a layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForegroundSet {
    pub elements: Vec<ForegroundElement>,
}

impl ForegroundSet {
    pub fn new(elements: Vec<ForegroundElement>) -> Self {
        Self { elements }
    }

    pub fn from_texts(texts: impl IntoIterator<Item = TextElement>) -> Self {
        Self::new(texts.into_iter().map(ForegroundElement::Text).collect())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn text_count(&self) -> usize {
        self.elements.iter().filter(|e| e.is_text()).count()
    }

    pub fn image_count(&self) -> usize {
        self.len() - self.text_count()
    }
}

/// A background image in 8-bit RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundImage {
    pixels: RgbImage,
}

impl BackgroundImage {
    pub fn new(pixels: RgbImage) -> Result<Self> {
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(Error::Dimension("background image has zero size".into()));
        }
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn into_pixels(self) -> RgbImage {
        self.pixels
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }
}

/// One dataset record: background, foreground conditions and the ground-truth layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSample {
    pub id: String,
    pub background: BackgroundImage,
    pub foreground: ForegroundSet,
    pub layout: Layout,
}

impl DesignSample {
    pub fn new(
        id: impl Into<String>,
        background: BackgroundImage,
        foreground: ForegroundSet,
        layout: Layout,
    ) -> Result<Self> {
        if layout.len() != foreground.len() {
            return Err(Error::shape(format!(
                "layout has {} boxes for {} foreground elements",
                layout.len(),
                foreground.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            background,
            foreground,
            layout,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_parsing() {
        assert_eq!("button".parse::<TextClass>().unwrap(), TextClass::Button);
        assert!("logo".parse::<TextClass>().is_err());
        assert_eq!(TextClass::from_ui_label("footnote").unwrap(), TextClass::Disclaimer);
        assert_eq!(TextClass::from_ui_label("Header").unwrap(), TextClass::Header);
        assert!(TextClass::from_ui_label("logo").is_err());
        for c in TextClass::ALL {
            assert_eq!(TextClass::from_index(c.index()).unwrap(), c);
        }
        assert!(TextClass::from_index(4).is_err());
    }

    #[test]
    fn text_length_counts_chars() {
        assert_eq!(TextElement::new("héllo", TextClass::Body).length(), 5);
        assert_eq!(TextElement::new("", TextClass::Body).length(), 0);
    }

    #[test]
    fn empty_images_rejected() {
        assert!(ImageElement::new(RgbImage::new(0, 3)).is_err());
        assert!(BackgroundImage::new(RgbImage::new(4, 0)).is_err());
    }

    #[test]
    fn foreground_counts() {
        let fg = ForegroundSet::new(vec![
            ForegroundElement::Text(TextElement::new("a", TextClass::Header)),
            ForegroundElement::Image(ImageElement::new(RgbImage::new(2, 2)).unwrap()),
            ForegroundElement::Text(TextElement::new("b", TextClass::Body)),
        ]);
        assert_eq!(fg.text_count() + fg.image_count(), fg.len());
        assert_eq!(fg.image_count(), 1);
    }
}
