//! Multimodal layout generation for ad banners.
//!
//! Boxes for text and image elements are placed on a background by a
//! transformer generator trained adversarially, variationally, or both, with
//! box-level supervision and layout regularizers. The crate also holds the
//! evaluation metrics, a deterministic banner renderer, dataset I/O and a
//! transport-agnostic design service.

pub mod batch;
pub mod checkpoint;
pub mod charset;
pub mod conditioning;
pub mod config;
pub mod dataset;
pub mod elements;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod objectives;
pub mod pipeline;
pub mod renderer;
pub mod service;
pub mod training;

pub use elements::{
    BackgroundImage, DesignSample, ForegroundElement, ForegroundSet, ImageElement, TextClass,
    TextElement,
};
pub use error::{Error, Result};
pub use geometry::{Layout, NormalizedBox, PixelBox};
pub use objectives::{LossReport, LossWeights, Variant};
