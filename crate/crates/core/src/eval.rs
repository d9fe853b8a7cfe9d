//! Rotated-box evaluation: per-category mIoU of pseudo-labels against their
//! ground truth, VOC-style AP, and the oracle ceiling.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryTable, LabeledBox};
use crate::error::{Error, Result};
use crate::geometry::{rotated_iou, OrientedBox};
use crate::selection::{pseudo_label, select, ProposalSet, SelectionContext, SelectionStrategy};
use crate::symmetry::ConversionMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    /// 11-point interpolated AP, as in the DOTA devkit.
    #[default]
    Voc07,
    /// Area under the monotone precision envelope.
    Continuous,
}

impl std::str::FromStr for MetricMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voc07" => Ok(MetricMode::Voc07),
            "continuous" => Ok(MetricMode::Continuous),
            other => Err(Error::invalid(format!("unknown metric mode `{other}` (expected voc07 or continuous)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub image_id: String,
    pub obb: OrientedBox,
    pub category: String,
    pub confidence: f64,
}

impl Detection {
    pub fn from_labeled(b: &LabeledBox) -> Result<Self> {
        let confidence = b.confidence.ok_or_else(|| {
            Error::invalid(format!("detection in `{}` has no confidence", b.image_id))
        })?;
        Ok(Detection {
            image_id: b.image_id.clone(),
            obb: b.obb,
            category: b.category.clone(),
            confidence,
        })
    }
}

/// Pairs pseudo-labels with ground truth by position within each image:
/// the k-th label of an image belongs to the k-th ground-truth box of that
/// image.
pub fn pair_by_order<'a>(
    pseudo: &'a [LabeledBox],
    gt: &'a [LabeledBox],
) -> Result<Vec<(&'a LabeledBox, &'a LabeledBox)>> {
    let mut by_image: BTreeMap<&str, (Vec<&LabeledBox>, Vec<&LabeledBox>)> = BTreeMap::new();
    for p in pseudo {
        by_image.entry(&p.image_id).or_default().0.push(p);
    }
    for g in gt {
        by_image.entry(&g.image_id).or_default().1.push(g);
    }
    let mut pairs = Vec::with_capacity(gt.len());
    for (image, (ps, gs)) in by_image {
        if ps.len() != gs.len() {
            return Err(Error::Pairing(format!(
                "image `{image}` has {} pseudo-labels but {} ground-truth boxes",
                ps.len(),
                gs.len()
            )));
        }
        pairs.extend(ps.into_iter().zip(gs));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiouReport {
    pub per_category: BTreeMap<String, f64>,
    pub instances: BTreeMap<String, usize>,
    /// Unweighted mean over categories.
    pub mean: f64,
}

/// Mean rotated IoU of each pseudo-label with its paired ground truth,
/// averaged over instances within a category (the ground truth's category).
pub fn miou(pairs: &[(&LabeledBox, &LabeledBox)]) -> Result<MiouReport> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (p, g) in pairs {
        if p.image_id != g.image_id {
            return Err(Error::Pairing(format!(
                "pseudo-label from `{}` paired with ground truth from `{}`",
                p.image_id, g.image_id
            )));
        }
        let iou = rotated_iou(&p.obb, &g.obb)?;
        let e = sums.entry(g.category.clone()).or_insert((0.0, 0));
        e.0 += iou;
        e.1 += 1;
    }
    let per_category: BTreeMap<String, f64> = sums
        .iter()
        .map(|(c, &(s, n))| (c.clone(), s / n as f64))
        .collect();
    let instances = sums.iter().map(|(c, &(_, n))| (c.clone(), n)).collect();
    Ok(MiouReport {
        mean: mean(per_category.values().copied()),
        per_category,
        instances,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApResult {
    pub ap: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Non-difficult ground-truth boxes.
    pub positives: usize,
    /// Detections matched to difficult ground truth, counted as neither.
    pub ignored: usize,
}

/// Average precision of `dets` against `gts`, both assumed to belong to one
/// category. Detections are matched greedily in descending confidence order
/// to the highest-IoU ground truth of their image; a match needs
/// `IoU > iou_thresh` and each ground truth matches at most once. Matches to
/// difficult ground truth are ignored.
pub fn average_precision(
    dets: &[Detection],
    gts: &[LabeledBox],
    iou_thresh: f64,
    mode: MetricMode,
) -> Result<ApResult> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::invalid(format!("IoU threshold must lie in (0, 1), got {iou_thresh}")));
    }
    if let Some(d) = dets.iter().find(|d| !d.confidence.is_finite()) {
        return Err(Error::invalid(format!("non-finite confidence in `{}`", d.image_id)));
    }
    let mut gt_by_image: HashMap<&str, Vec<(usize, &LabeledBox)>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        gt_by_image.entry(&g.image_id).or_default().push((i, g));
    }
    let positives = gts.iter().filter(|g| !g.difficult).count();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));

    let mut taken = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(dets.len());
    let mut ignored = 0;
    for &di in &order {
        let d = &dets[di];
        let mut best: Option<(f64, usize, bool)> = None;
        for &(gi, g) in gt_by_image.get(d.image_id.as_str()).into_iter().flatten() {
            let iou = rotated_iou(&d.obb, &g.obb)?;
            if best.is_none_or(|(b, _, _)| iou > b) {
                best = Some((iou, gi, g.difficult));
            }
        }
        match best {
            Some((iou, gi, difficult)) if iou > iou_thresh => {
                if difficult {
                    ignored += 1;
                } else if !taken[gi] {
                    taken[gi] = true;
                    outcomes.push(true);
                } else {
                    outcomes.push(false);
                }
            }
            _ => outcomes.push(false),
        }
    }

    let true_positives = outcomes.iter().filter(|&&t| t).count();
    let false_positives = outcomes.len() - true_positives;
    let ap = if positives == 0 {
        0.0
    } else {
        let (recall, precision) = pr_curve(&outcomes, positives);
        match mode {
            MetricMode::Voc07 => ap_11_point(&recall, &precision),
            MetricMode::Continuous => ap_area(&recall, &precision),
        }
    };
    Ok(ApResult {
        ap,
        true_positives,
        false_positives,
        positives,
        ignored,
    })
}

fn pr_curve(outcomes: &[bool], positives: usize) -> (Vec<f64>, Vec<f64>) {
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(outcomes.len());
    let mut precision = Vec::with_capacity(outcomes.len());
    for (k, &hit) in outcomes.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    (recall, precision)
}

fn ap_11_point(recall: &[f64], precision: &[f64]) -> f64 {
    (0..=10)
        .map(|t| {
            let t = t as f64 / 10.0;
            recall
                .iter()
                .zip(precision)
                .filter(|(&r, _)| r >= t)
                .map(|(_, &p)| p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

fn ap_area(recall: &[f64], precision: &[f64]) -> f64 {
    let mut mrec = Vec::with_capacity(recall.len() + 2);
    let mut mpre = Vec::with_capacity(recall.len() + 2);
    mrec.push(0.0);
    mpre.push(0.0);
    mrec.extend_from_slice(recall);
    mpre.extend_from_slice(precision);
    mrec.push(1.0);
    mpre.push(0.0);
    for i in (0..mpre.len() - 1).rev() {
        mpre[i] = mpre[i].max(mpre[i + 1]);
    }
    (1..mrec.len())
        .filter(|&i| mrec[i] != mrec[i - 1])
        .map(|i| (mrec[i] - mrec[i - 1]) * mpre[i])
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub metric_mode: MetricMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            iou_threshold: 0.5,
            metric_mode: MetricMode::Voc07,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MatchCounts {
    pub instances: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub ignored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub metric_mode: MetricMode,
    pub per_category_miou: BTreeMap<String, f64>,
    pub per_category_ap50: BTreeMap<String, f64>,
    pub mean_miou: f64,
    pub map50: f64,
    pub counts: MatchCounts,
}

impl EvalReport {
    /// Aligned plain-text table, one row per category plus the means.
    pub fn to_table(&self) -> String {
        let mut cats: Vec<&String> = self
            .per_category_miou
            .keys()
            .chain(self.per_category_ap50.keys())
            .collect();
        cats.sort();
        cats.dedup();
        let width = cats.iter().map(|c| c.len()).max().unwrap_or(0).max("category".len());
        let fmt = |v: Option<&f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.4}", v));
        let mut out = format!("{:<width$}  {:>8}  {:>8}\n", "category", "mIoU", "AP50");
        for c in cats {
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>8}\n",
                c,
                fmt(self.per_category_miou.get(c)),
                fmt(self.per_category_ap50.get(c))
            ));
        }
        out.push_str(&format!(
            "{:<width$}  {:>8.4}  {:>8.4}\n",
            "mean", self.mean_miou, self.map50
        ));
        out
    }
}

/// mIoU and AP for pseudo-labels already paired with their ground truth.
pub fn evaluate_pairs(pairs: &[(&LabeledBox, &LabeledBox)], opts: &EvalOptions) -> Result<EvalReport> {
    let miou_report = miou(pairs)?;

    let mut dets_by_cat: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    let mut gts_by_cat: BTreeMap<&str, Vec<LabeledBox>> = BTreeMap::new();
    for (p, g) in pairs {
        dets_by_cat.entry(&p.category).or_default().push(Detection::from_labeled(p)?);
        gts_by_cat.entry(&g.category).or_default().push((*g).clone());
    }

    let mut per_category_ap50 = BTreeMap::new();
    let mut counts = MatchCounts {
        instances: pairs.len(),
        ..Default::default()
    };
    let categories: Vec<&str> = dets_by_cat.keys().chain(gts_by_cat.keys()).copied().collect();
    for cat in categories {
        if per_category_ap50.contains_key(cat) {
            continue;
        }
        let dets = dets_by_cat.get(cat).map_or(&[][..], Vec::as_slice);
        let gts = gts_by_cat.get(cat).map_or(&[][..], Vec::as_slice);
        let r = average_precision(dets, gts, opts.iou_threshold, opts.metric_mode)?;
        counts.true_positives += r.true_positives;
        counts.false_positives += r.false_positives;
        counts.false_negatives += r.positives - r.true_positives;
        counts.ignored += r.ignored;
        // Categories without non-difficult ground truth stay out of the mean.
        if r.positives > 0 {
            per_category_ap50.insert(cat.to_string(), r.ap);
        }
    }

    Ok(EvalReport {
        iou_threshold: opts.iou_threshold,
        metric_mode: opts.metric_mode,
        map50: mean(per_category_ap50.values().copied()),
        per_category_ap50,
        mean_miou: miou_report.mean,
        per_category_miou: miou_report.per_category,
        counts,
    })
}

/// Evaluates pseudo-labels against ground truth paired by order per image.
pub fn evaluate(pseudo: &[LabeledBox], gt: &[LabeledBox], opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_pairs(&pair_by_order(pseudo, gt)?, opts)
}

/// Labels every proposal set under `strategy` and evaluates against the
/// ground truth aligned with `sets`.
pub fn strategy_report(
    sets: &[ProposalSet],
    gts: &[LabeledBox],
    strategy: SelectionStrategy,
    conversion: &ConversionMode,
    categories: &CategoryTable,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if sets.len() != gts.len() {
        return Err(Error::Pairing(format!(
            "{} proposal sets but {} ground-truth boxes",
            sets.len(),
            gts.len()
        )));
    }
    let ctx = SelectionContext {
        strategy,
        conversion,
        categories,
    };
    let labels = sets
        .iter()
        .zip(gts)
        .map(|(ps, g)| {
            let sel = select(ps, &ctx, Some(&g.obb))?;
            Ok(pseudo_label(ps, &sel, conversion)?.to_labeled_box())
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = labels.iter().zip(gts).collect();
    evaluate_pairs(&pairs, opts)
}

/// The ceiling: every point gets the proposal whose converted box has the
/// highest IoU with its ground truth.
pub fn oracle_report(
    sets: &[ProposalSet],
    gts: &[LabeledBox],
    conversion: &ConversionMode,
    categories: &CategoryTable,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    strategy_report(sets, gts, SelectionStrategy::OracleIoU, conversion, categories, opts)
}
