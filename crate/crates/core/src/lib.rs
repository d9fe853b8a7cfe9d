//! Oriented-box pseudo-labels from single-point annotations.
//!
//! Each annotated point comes with a handful of candidate masks (typically
//! from a promptable segmenter). The pipeline scores the candidates, keeps
//! the best one per point and converts it into a rotated box, either as the
//! minimum-area rectangle or as the circumscribed box aligned with the mask's
//! symmetry axis. The `eval` module measures the resulting labels against
//! ground truth with rotated IoU and VOC-style AP.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod mask;
pub mod pipeline;
pub mod scoring;
pub mod selection;
pub mod symmetry;

pub use error::{Error, Result};
