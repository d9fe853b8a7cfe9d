//! Annotation records shared by the pipeline stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Point2};

/// The fifteen DOTA-v1.0 categories, in devkit order.
pub const DOTA_CATEGORIES: [&str; 15] = [
    "plane",
    "baseball-diamond",
    "bridge",
    "ground-track-field",
    "small-vehicle",
    "large-vehicle",
    "ship",
    "tennis-court",
    "basketball-court",
    "storage-tank",
    "soccer-ball-field",
    "roundabout",
    "harbor",
    "swimming-pool",
    "helicopter",
];

/// A single annotated point: the only supervision an instance carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
    pub category: String,
}

impl PointAnnotation {
    pub fn point(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// An oriented box with its category, used for both ground truth and
/// pseudo-labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledBox {
    pub image_id: String,
    pub obb: OrientedBox,
    pub category: String,
    pub difficult: bool,
    /// Present on pseudo-labels and detections.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Ordered category names; a category's index is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryTable(Vec<String>);

impl CategoryTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("category table is empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid category name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(Error::Config(format!("duplicate category `{n}`")));
            }
        }
        Ok(CategoryTable(names))
    }

    pub fn dota() -> Self {
        CategoryTable(DOTA_CATEGORIES.iter().map(|s| s.to_string()).collect())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.0
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("unknown category `{name}`")))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for CategoryTable {
    fn default() -> Self {
        Self::dota()
    }
}
