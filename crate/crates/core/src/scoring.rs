//! Point bags, negative points, the centrality target and the fused
//! mask-quality score.
//!
//! Learned scores (bag classification, box classification, offset) are
//! produced elsewhere and arrive as [`ScoreBundle`] fields. This module only
//! aggregates and activates them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_point, AxisAlignedBox, OrientedBox, Point2};
use crate::mask::{inner_margin, pixel_points, BinaryMask};

/// Relative enlargement of the circumscribed box for negative points.
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_BAG_SIZE: usize = 64;
pub const DEFAULT_MARGIN_PX: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BagKind {
    Positive,
    NegativeMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointBag {
    pub points: Vec<Point2>,
    pub kind: BagKind,
}

/// `n` pixel centers drawn uniformly, with replacement, from the mask.
pub fn sample_positive_bag(m: &BinaryMask, n: usize, seed: u64) -> Result<PointBag> {
    Ok(PointBag {
        points: sample_points(m, n, seed)?,
        kind: BagKind::Positive,
    })
}

/// `n` pixel centers drawn uniformly, with replacement, from the inner
/// margin of width `margin_px`.
pub fn sample_negative_bag(m: &BinaryMask, margin_px: usize, n: usize, seed: u64) -> Result<PointBag> {
    let margin = inner_margin(m, margin_px)?;
    Ok(PointBag {
        points: sample_points(&margin, n, seed)?,
        kind: BagKind::NegativeMargin,
    })
}

fn sample_points(m: &BinaryMask, n: usize, seed: u64) -> Result<Vec<Point2>> {
    if n == 0 {
        return Err(Error::invalid("bag size must be at least 1"));
    }
    let pool = pixel_points(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect())
}

/// The eight points around an enlarged box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegativePointSet {
    pub points: [Point2; 8],
}

/// Vertices and edge midpoints of `bx` grown by `1 + delta` in both extents,
/// ordered by `(i, j)` over `{-1, 0, 1}² \ {(0, 0)}`.
pub fn negative_points(bx: &OrientedBox, delta: f64) -> Result<NegativePointSet> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid(format!("delta must be non-negative, got {delta}")));
    }
    let scale = 1.0 + delta;
    let mut points = [Point2::default(); 8];
    let mut k = 0;
    for i in [-1.0, 0.0, 1.0] {
        for j in [-1.0, 0.0, 1.0] {
            if i == 0.0 && j == 0.0 {
                continue;
            }
            points[k] = box_point(bx, scale, i, j);
            k += 1;
        }
    }
    Ok(NegativePointSet { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffsetTarget {
    pub value: f64,
    /// The point was on or outside the box; the value was clamped to 1.
    pub clamped: bool,
}

/// Centrality target of an annotated point relative to a horizontal box:
/// `1 − sqrt(rx·ry)` with `r = min(d₁, d₂) / max(d₁, d₂)` per axis.
pub fn gt_offset(a: Point2, bx: &AxisAlignedBox) -> OffsetTarget {
    let ratio = |lo: f64, hi: f64| {
        if lo > 0.0 && hi > 0.0 {
            Some(lo.min(hi) / lo.max(hi))
        } else {
            None
        }
    };
    match (ratio(a.x - bx.x1, bx.x2 - a.x), ratio(a.y - bx.y1, bx.y2 - a.y)) {
        (Some(rx), Some(ry)) => OffsetTarget {
            value: 1.0 - (rx * ry).sqrt(),
            clamped: false,
        },
        _ => OffsetTarget {
            value: 1.0,
            clamped: true,
        },
    }
}

/// Bag classification score: `Σ_p inst[p]·cls[p]`, elementwise over classes.
pub fn bag_score(inst: &[Vec<f64>], cls: &[Vec<f64>]) -> Result<Vec<f64>> {
    if inst.len() != cls.len() {
        return Err(Error::invalid(format!(
            "instance and class score matrices have {} and {} rows",
            inst.len(),
            cls.len()
        )));
    }
    let k = inst.first().map_or(0, Vec::len);
    let mut out = vec![0.0; k];
    for (row, (a, b)) in inst.iter().zip(cls).enumerate() {
        if a.len() != k || b.len() != k {
            return Err(Error::invalid(format!("score matrix row {row} does not have {k} columns")));
        }
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
            *o += x * y;
        }
    }
    Ok(out)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_category(k: usize, category: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("score vector is empty"));
    }
    if category >= k {
        return Err(Error::invalid(format!("category index {category} out of range for {k} classes")));
    }
    Ok(())
}

fn positive_term(pos: &[f64], category: usize) -> Result<f64> {
    check_category(pos.len(), category)?;
    Ok(softmax(pos)[category])
}

fn negative_term(neg: &[f64]) -> Result<f64> {
    if neg.is_empty() {
        return Err(Error::invalid("negative bag score vector is empty"));
    }
    Ok(neg.iter().map(|&s| sigmoid(s)).fold(f64::NEG_INFINITY, f64::max))
}

/// Bag-mask term: `softmax(pos)[category] − max_k sigmoid(neg[k])`.
pub fn s_bmm(pos: &[f64], neg: &[f64], category: usize) -> Result<f64> {
    Ok(positive_term(pos, category)? - negative_term(neg)?)
}

/// Centrality term: `softmax(box_cls)[category] − offset_pred`.
pub fn s_cgm(box_cls: &[f64], offset_pred: f64, category: usize) -> Result<f64> {
    check_offset(offset_pred)?;
    Ok(positive_term(box_cls, category)? - offset_pred)
}

fn check_offset(offset: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&offset) {
        return Err(Error::invalid(format!("offset prediction must lie in [0, 1], got {offset}")));
    }
    Ok(())
}

/// Scores attached to one mask proposal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreBundle {
    pub s_sam: f64,
    /// Per-point instance scores of the positive bag, `|bag| × K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_point_instance_scores: Option<Vec<Vec<f64>>>,
    /// Per-point class scores of the positive bag, `|bag| × K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_point_cls_scores: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_bag_class_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neg_bag_class_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_cls_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_pred: Option<f64>,
}

impl ScoreBundle {
    pub fn sam_only(s_sam: f64) -> Self {
        ScoreBundle {
            s_sam,
            ..Default::default()
        }
    }

    /// Checks finiteness, vector lengths against `num_classes` and the offset
    /// range. Errors name the offending field.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let field_err = |field: &str, msg: String| Error::format(field.to_string(), msg);
        if !self.s_sam.is_finite() {
            return Err(field_err("s_sam", "must be finite".into()));
        }
        let vectors = [
            ("pos_bag_class_scores", &self.pos_bag_class_scores),
            ("neg_bag_class_scores", &self.neg_bag_class_scores),
            ("box_cls_scores", &self.box_cls_scores),
        ];
        for (name, v) in vectors {
            if let Some(v) = v {
                if v.len() != num_classes {
                    return Err(field_err(name, format!("has {} entries, expected {num_classes}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(field_err(name, "contains a non-finite value".into()));
                }
            }
        }
        let matrices = [
            ("per_point_instance_scores", &self.per_point_instance_scores),
            ("per_point_cls_scores", &self.per_point_cls_scores),
        ];
        for (name, m) in matrices {
            if let Some(m) = m {
                if let Some((i, _)) = m.iter().enumerate().find(|(_, row)| row.len() != num_classes) {
                    return Err(field_err(name, format!("row {i} does not have {num_classes} columns")));
                }
                if m.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(field_err(name, "contains a non-finite value".into()));
                }
            }
        }
        match (&self.per_point_instance_scores, &self.per_point_cls_scores) {
            (Some(a), Some(b)) if a.len() != b.len() => {
                return Err(field_err(
                    "per_point_cls_scores",
                    format!("has {} rows, instance scores have {}", b.len(), a.len()),
                ))
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(field_err(
                    "per_point_instance_scores",
                    "instance and class matrices must be given together".into(),
                ))
            }
            _ => {}
        }
        if let Some(o) = self.offset_pred {
            check_offset(o).map_err(|e| field_err("offset_pred", e.to_string()))?;
        }
        Ok(())
    }

    /// Positive-bag class scores: the bag-level vector if present, otherwise
    /// the aggregate of the per-point matrices.
    pub fn positive_bag_scores(&self) -> Result<Option<Vec<f64>>> {
        if let Some(v) = &self.pos_bag_class_scores {
            return Ok(Some(v.clone()));
        }
        match (&self.per_point_instance_scores, &self.per_point_cls_scores) {
            (Some(inst), Some(cls)) => bag_score(inst, cls).map(Some),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl FusionWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(FusionWeights { alpha, beta })
    }

    /// The 3×3 grid `{0.8, 1.0, 1.2}²` used to probe weight sensitivity.
    pub fn sensitivity_grid() -> Vec<FusionWeights> {
        let steps = [0.8, 1.0, 1.2];
        steps
            .iter()
            .flat_map(|&beta| steps.iter().map(move |&alpha| FusionWeights { alpha, beta }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedScore {
    pub score: f64,
    pub s_bmm: f64,
    pub s_cgm: f64,
    /// Learned inputs that were absent and contributed zero.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<&'static str>,
}

/// `s_sam + α·S_bmm + β·S_cgm`. Each of the four learned sub-terms
/// (positive bag, negative bag, box class, offset) contributes zero when its
/// input is missing; missing inputs are listed in the result.
pub fn fuse_score(bundle: &ScoreBundle, weights: &FusionWeights, category: usize) -> Result<FusedScore> {
    let mut missing = Vec::new();
    let pos = match bundle.positive_bag_scores()? {
        Some(v) => positive_term(&v, category)?,
        None => {
            missing.push("pos_bag_class_scores");
            0.0
        }
    };
    let neg = match &bundle.neg_bag_class_scores {
        Some(v) => negative_term(v)?,
        None => {
            missing.push("neg_bag_class_scores");
            0.0
        }
    };
    let box_cls = match &bundle.box_cls_scores {
        Some(v) => positive_term(v, category)?,
        None => {
            missing.push("box_cls_scores");
            0.0
        }
    };
    let offset = match bundle.offset_pred {
        Some(o) => {
            check_offset(o)?;
            o
        }
        None => {
            missing.push("offset_pred");
            0.0
        }
    };
    let s_bmm = pos - neg;
    let s_cgm = box_cls - offset;
    Ok(FusedScore {
        score: bundle.s_sam + weights.alpha * s_bmm + weights.beta * s_cgm,
        s_bmm,
        s_cgm,
        missing,
    })
}
