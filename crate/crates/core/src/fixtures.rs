//! Synthetic datasets with known answers: rasterized shapes, perturbed mask
//! proposals and score bundles drawn from a simple generative model.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryTable, LabeledBox, PointAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Point2};
use crate::io::{self, ProposalFile, ProposalRecord, RleRecord};
use crate::mask::{inner_margin, mask_aabb, BinaryMask};
use crate::scoring::{gt_offset, ScoreBundle};
use crate::selection::{Proposal, ProposalSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Shape {
    Rectangle,
    Ellipse,
    /// Plane-like cross: a fuselage of thickness `arm_ratio·L` and a wing of
    /// the same span with half that thickness.
    Cross { arm_ratio: f64 },
    LShape,
}

impl Shape {
    pub fn category(&self) -> &'static str {
        match self {
            Shape::Rectangle => "large-vehicle",
            Shape::Ellipse => "ship",
            Shape::Cross { .. } => "plane",
            Shape::LShape => "harbor",
        }
    }

    /// Width over height of the construction box.
    fn aspect_range(&self) -> (f64, f64) {
        match self {
            Shape::Rectangle => (1.6, 3.0),
            Shape::Ellipse => (1.8, 3.5),
            Shape::Cross { .. } => (1.0, 1.0),
            Shape::LShape => (1.2, 1.8),
        }
    }

    /// Membership test in box-local coordinates for a `w × h` construction
    /// box centred on the origin.
    pub fn contains_local(&self, q: Point2, w: f64, h: f64) -> bool {
        let (hw, hh) = (w / 2.0, h / 2.0);
        match *self {
            Shape::Rectangle => q.x.abs() <= hw && q.y.abs() <= hh,
            Shape::Ellipse => (q.x / hw).powi(2) + (q.y / hh).powi(2) <= 1.0,
            Shape::Cross { arm_ratio } => {
                let t = arm_ratio * w;
                let fuselage = q.x.abs() <= hw && q.y.abs() <= t / 2.0;
                let wing = q.y.abs() <= hh && q.x.abs() <= 0.25 * t;
                fuselage || wing
            }
            Shape::LShape => {
                let inside = q.x.abs() <= hw && q.y.abs() <= hh;
                let foot = q.y >= hh - 0.35 * h;
                let upright = q.x <= -hw + 0.35 * w;
                inside && (foot || upright)
            }
        }
    }
}

/// How the synthetic learned scores relate to proposal quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreModel {
    /// Bag, neg and box scores rise with the proposal's mask IoU against the
    /// exact mask; `s_sam` slightly favours oversized masks.
    Correlated,
    /// Learned scores are pure noise.
    Uninformative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureSpec {
    pub instances: usize,
    pub image_size: usize,
    pub shapes: Vec<Shape>,
    pub min_len: f64,
    pub max_len: f64,
    /// Maximum distance of the annotated point from the box center, px.
    pub jitter: f64,
    pub score_model: ScoreModel,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            instances: 100,
            image_size: 160,
            shapes: vec![
                Shape::Rectangle,
                Shape::Ellipse,
                Shape::Cross { arm_ratio: 0.2 },
                Shape::LShape,
            ],
            min_len: 40.0,
            max_len: 80.0,
            jitter: 0.0,
            score_model: ScoreModel::Correlated,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.shapes.is_empty() {
            return Err(Error::invalid("fixture spec needs at least one instance and one shape"));
        }
        if !(self.min_len >= 8.0 && self.min_len <= self.max_len) {
            return Err(Error::invalid("fixture lengths must satisfy 8 <= min_len <= max_len"));
        }
        if self.max_len * std::f64::consts::SQRT_2 + 24.0 > self.image_size as f64 {
            return Err(Error::invalid("image too small for the largest fixture object"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        for s in &self.shapes {
            if let Shape::Cross { arm_ratio } = s {
                if !(*arm_ratio > 0.0 && *arm_ratio < 1.0) {
                    return Err(Error::invalid("cross arm ratio must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    Exact,
    Dilated,
    Eroded,
    Shifted,
    Part,
    Superset,
}

#[derive(Debug, Clone)]
pub struct FixtureInstance {
    pub shape: Shape,
    /// Construction box; equals the ground truth.
    pub gt: OrientedBox,
    /// Direction of the shape's long (or, for the cross, fuselage) axis; the
    /// `w` side of `gt`.
    pub construction_angle: f64,
    pub exact_mask: BinaryMask,
    pub set: ProposalSet,
    pub perturbations: Vec<Perturbation>,
}

impl FixtureInstance {
    pub fn image_id(&self) -> &str {
        &self.set.annotation().image_id
    }

    pub fn gt_label(&self) -> LabeledBox {
        LabeledBox {
            image_id: self.image_id().to_string(),
            obb: self.gt,
            category: self.shape.category().to_string(),
            difficult: false,
            confidence: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub image_size: usize,
    pub categories: CategoryTable,
    pub instances: Vec<FixtureInstance>,
}

impl FixtureSet {
    pub fn proposal_sets(&self) -> Vec<ProposalSet> {
        self.instances.iter().map(|i| i.set.clone()).collect()
    }

    pub fn ground_truth(&self) -> Vec<LabeledBox> {
        self.instances.iter().map(FixtureInstance::gt_label).collect()
    }
}

/// Rasterizes `shape` laid out in `bx` (pixel centers inside are set).
pub fn shape_mask(shape: Shape, bx: &OrientedBox, size: usize) -> Result<BinaryMask> {
    BinaryMask::rasterize(size, size, |p| shape.contains_local(bx.to_local(p), bx.w(), bx.h()))
}

/// Square-kernel dilation by `r` pixels, clipped to the image.
pub fn dilate(m: &BinaryMask, r: usize) -> Result<BinaryMask> {
    let (w, h) = (m.width(), m.height());
    let mut out = BinaryMask::empty(w, h)?;
    for (c, row) in m.set_pixels() {
        for rr in row.saturating_sub(r)..(row + r + 1).min(h) {
            for cc in c.saturating_sub(r)..(c + r + 1).min(w) {
                out.set(cc, rr, true);
            }
        }
    }
    Ok(out)
}

/// Removes the `r`-pixel inner band; may return an empty mask.
pub fn erode(m: &BinaryMask, r: usize) -> Result<BinaryMask> {
    let band = inner_margin(m, r)?;
    BinaryMask::from_fn(m.width(), m.height(), |c, row| m.get(c, row) && !band.get(c, row))
}

fn shift(m: &BinaryMask, dx: isize, dy: isize) -> Result<BinaryMask> {
    let (w, h) = (m.width() as isize, m.height() as isize);
    BinaryMask::from_fn(m.width(), m.height(), |c, r| {
        let (sc, sr) = (c as isize - dx, r as isize - dy);
        sc >= 0 && sr >= 0 && sc < w && sr < h && m.get(sc as usize, sr as usize)
    })
}

fn perturb(
    kind: Perturbation,
    exact: &BinaryMask,
    gt: &OrientedBox,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BinaryMask> {
    let m = match kind {
        Perturbation::Exact => exact.clone(),
        Perturbation::Dilated => dilate(exact, 2)?,
        Perturbation::Eroded => erode(exact, 2)?,
        Perturbation::Shifted => {
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = rng.gen_range(4.0..8.0);
            shift(exact, (d * phi.cos()).round() as isize, (d * phi.sin()).round() as isize)?
        }
        Perturbation::Part => {
            // Keep the part on one side of a cut across the long axis.
            let cut = rng.gen_range(-0.15..0.15) * gt.w();
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            BinaryMask::from_fn(size, size, |c, r| {
                exact.get(c, r) && sign * gt.to_local(crate::mask::pixel_center(c, r)).x >= cut
            })?
        }
        Perturbation::Superset => {
            // The object plus a neighbouring blob, as when a prompt leaks
            // into adjacent structure.
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let reach = gt.w().max(gt.h()) * 0.5;
            let blob = Point2::new(gt.cx() + reach * phi.cos(), gt.cy() + reach * phi.sin());
            let radius = rng.gen_range(0.2..0.35) * gt.w().max(gt.h());
            BinaryMask::from_fn(size, size, |c, r| {
                exact.get(c, r) || (crate::mask::pixel_center(c, r) - blob).norm() <= radius
            })?
        }
    };
    if m.is_empty() {
        return Ok(exact.clone());
    }
    Ok(m)
}

fn logits(rng: &mut ChaCha8Rng, k: usize, base: f64) -> Vec<f64> {
    (0..k).map(|_| base + rng.gen_range(-0.5..0.5)).collect()
}

fn synth_scores(
    model: ScoreModel,
    kind: Perturbation,
    quality: f64,
    offset_target: f64,
    category: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> ScoreBundle {
    let bonus = matches!(kind, Perturbation::Dilated | Perturbation::Superset) as u8 as f64 * 0.05;
    let s_sam = 0.80 + 0.15 * rng.gen::<f64>() + bonus;
    let mut pos = logits(rng, k, 0.0);
    let mut neg = logits(rng, k, -4.0);
    let mut box_cls = logits(rng, k, 0.0);
    let noise = rng.gen_range(-0.05..0.05);
    let offset = match model {
        ScoreModel::Correlated => {
            pos[category] += 6.0 * quality;
            neg[category] = -3.0 + 6.0 * (1.0 - quality) + rng.gen_range(-0.5..0.5);
            box_cls[category] += 5.0 * quality;
            offset_target + noise
        }
        ScoreModel::Uninformative => rng.gen::<f64>(),
    };
    ScoreBundle {
        s_sam,
        pos_bag_class_scores: Some(pos),
        neg_bag_class_scores: Some(neg),
        box_cls_scores: Some(box_cls),
        offset_pred: Some(offset.clamp(0.0, 1.0)),
        ..Default::default()
    }
}

const PERTURBATIONS: [Perturbation; 6] = [
    Perturbation::Exact,
    Perturbation::Dilated,
    Perturbation::Eroded,
    Perturbation::Shifted,
    Perturbation::Part,
    Perturbation::Superset,
];

/// Generates `spec.instances` single-object images named `fx0000`,
/// `fx0001`, ... Shapes cycle through `spec.shapes`; the proposal order is
/// shuffled per instance. Identical `(spec, seed)` give identical output.
pub fn gen_fixtures(spec: &FixtureSpec, seed: u64) -> Result<FixtureSet> {
    spec.validate()?;
    let categories = CategoryTable::dota();
    let size = spec.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(spec.instances);
    for i in 0..spec.instances {
        let shape = spec.shapes[i % spec.shapes.len()];
        let category = shape.category();
        let k = categories.index_of(category)?;

        let long = rng.gen_range(spec.min_len..=spec.max_len);
        let (lo, hi) = shape.aspect_range();
        let aspect = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let half = size as f64 / 2.0;
        let cx = half + rng.gen_range(-8.0..8.0);
        let cy = half + rng.gen_range(-8.0..8.0);
        let gt = OrientedBox::new(cx, cy, long, long / aspect, angle)?;
        let exact = shape_mask(shape, &gt, size)?;

        let (jr, jphi) = (spec.jitter * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
        let point = Point2::new(cx + jr * jphi.cos(), cy + jr * jphi.sin());
        let annotation = PointAnnotation {
            image_id: format!("fx{i:04}"),
            x: point.x,
            y: point.y,
            category: category.to_string(),
        };

        let mut kinds = PERTURBATIONS.to_vec();
        kinds.shuffle(&mut rng);
        let mut proposals = Vec::with_capacity(kinds.len());
        for &kind in &kinds {
            let mask = perturb(kind, &exact, &gt, size, &mut rng)?;
            let quality = mask.iou(&exact)?;
            let offset_target = gt_offset(point, &mask_aabb(&mask)?).value;
            let scores = synth_scores(spec.score_model, kind, quality, offset_target, k, categories.len(), &mut rng);
            proposals.push(Proposal { mask, scores });
        }
        instances.push(FixtureInstance {
            shape,
            gt,
            construction_angle: gt.angle(),
            exact_mask: exact,
            set: ProposalSet::new(annotation, proposals)?,
            perturbations: kinds,
        });
    }
    Ok(FixtureSet {
        image_size: size,
        categories,
        instances,
    })
}

/// Proposal documents for a list of proposal sets, one per image.
pub fn proposal_files(sets: &[ProposalSet]) -> Result<BTreeMap<String, ProposalFile>> {
    let mut files: BTreeMap<String, ProposalFile> = BTreeMap::new();
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    for ps in sets {
        let image = ps.annotation().image_id.clone();
        let first = &ps.proposals()[0].mask;
        let point_index = {
            let c = counters.entry(image.clone()).or_insert(0);
            *c += 1;
            *c - 1
        };
        let file = files.entry(image.clone()).or_insert_with(|| ProposalFile {
            image_id: image.clone(),
            width: first.width(),
            height: first.height(),
            proposals: Vec::new(),
        });
        if (file.width, file.height) != (first.width(), first.height()) {
            return Err(Error::invalid(format!("image `{image}` has proposals of different sizes")));
        }
        file.proposals.extend(ps.proposals().iter().map(|p| ProposalRecord {
            point_index,
            rle: RleRecord::from_mask(&p.mask),
            scores: p.scores.clone(),
        }));
    }
    Ok(files)
}

/// Writes `points.csv`, `proposals/<id>.json` and `gt/<id>.txt` under `dir`.
pub fn write_fixtures(dir: &Path, set: &FixtureSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let annotations: Vec<PointAnnotation> = set.instances.iter().map(|i| i.set.annotation().clone()).collect();
    let points = dir.join("points.csv");
    std::fs::write(&points, io::format_points(&annotations)).map_err(|e| Error::io(&points, e))?;
    let docs = proposal_files(&set.proposal_sets())?
        .into_iter()
        .map(|(id, f)| (id, io::format_proposals(&f)))
        .collect();
    io::write_text_files(&dir.join("proposals"), &docs, "json")?;
    io::write_text_files(&dir.join("gt"), &io::dota_files(&set.ground_truth()), "txt")
}
