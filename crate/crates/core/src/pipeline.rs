//! Batch driver: selection and conversion over many proposal sets on a
//! bounded worker pool, with output order fixed by the input order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset::LabeledBox;
use crate::error::{Error, Result};
use crate::eval::{evaluate_pairs, EvalReport};
use crate::geometry::{min_area_rect, Point2};
use crate::io;
use crate::mask::mask_aabb;
use crate::scoring::{gt_offset, negative_points, sample_negative_bag, sample_positive_bag, FusedScore, OffsetTarget};
use crate::selection::{pseudo_label, select, ProposalSet, PseudoLabel, Selection, SelectionContext, SelectionStrategy};

/// Runs `f` over `items` on `workers` threads (0: one per core) and returns
/// the results in input order.
pub fn parallel_map<T, U, F>(items: &[T], workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> Result<U> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
}

/// Training targets derived from the chosen mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Supervision {
    pub gt_offset: OffsetTarget,
    pub negative_points: [Point2; 8],
    pub positive_bag: Vec<Point2>,
    pub negative_bag: Vec<Point2>,
}

/// Per-point outcome of the `select` stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectRecord {
    pub image_id: String,
    pub point_index: usize,
    pub category: String,
    pub strategy: &'static str,
    pub index: usize,
    pub confidence: f64,
    pub scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fused: Option<Vec<FusedScore>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supervision: Option<Supervision>,
}

/// Position of each set among the points of its image.
fn point_indices(sets: &[ProposalSet]) -> Vec<usize> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    sets.iter()
        .map(|ps| {
            let k = seen.entry(&ps.annotation().image_id).or_insert(0);
            *k += 1;
            *k - 1
        })
        .collect()
}

fn check_gt(sets: &[ProposalSet], gts: Option<&[LabeledBox]>, strategy: SelectionStrategy) -> Result<()> {
    match gts {
        Some(g) if g.len() != sets.len() => Err(Error::Pairing(format!(
            "{} proposal sets but {} ground-truth boxes",
            sets.len(),
            g.len()
        ))),
        None if strategy == SelectionStrategy::OracleIoU => Err(Error::MissingGroundTruth),
        _ => Ok(()),
    }
}

/// Supervision for one chosen mask. Bag seeds are derived from the config
/// seed and the set's position so they do not depend on scheduling.
pub fn supervision(ps: &ProposalSet, sel: &Selection, cfg: &PipelineConfig, position: usize) -> Result<Supervision> {
    let mask = &ps.proposals()[sel.index].mask;
    let box_seed = cfg.seed ^ (position as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let circumscribed = min_area_rect(&mask.footprint_extremes()?)?;
    Ok(Supervision {
        gt_offset: gt_offset(ps.annotation().point(), &mask_aabb(mask)?),
        negative_points: negative_points(&circumscribed, cfg.delta)?.points,
        positive_bag: sample_positive_bag(mask, cfg.bag_size, box_seed)?.points,
        negative_bag: sample_negative_bag(mask, cfg.margin_px, cfg.bag_size, box_seed.wrapping_add(1))?.points,
    })
}

/// Chooses one proposal per set. `gts`, aligned with `sets`, is needed only
/// for the oracle strategy.
pub fn run_select(
    sets: &[ProposalSet],
    gts: Option<&[LabeledBox]>,
    cfg: &PipelineConfig,
    with_supervision: bool,
) -> Result<Vec<SelectRecord>> {
    let strategy = cfg.selection_strategy();
    check_gt(sets, gts, strategy)?;
    let ctx = SelectionContext {
        strategy,
        conversion: &cfg.conversion,
        categories: &cfg.categories,
    };
    let positions = point_indices(sets);
    parallel_map(sets, cfg.workers, |i, ps| {
        let gt = gts.map(|g| &g[i].obb);
        let sel = select(ps, &ctx, gt)?;
        let sup = if with_supervision {
            Some(supervision(ps, &sel, cfg, i)?)
        } else {
            None
        };
        let a = ps.annotation();
        Ok(SelectRecord {
            image_id: a.image_id.clone(),
            point_index: positions[i],
            category: a.category.clone(),
            strategy: strategy.name(),
            index: sel.index,
            confidence: sel.confidence,
            scores: sel.scores,
            fused: sel.fused,
            supervision: sup,
        })
    })
}

/// Selection followed by mask-to-box conversion.
pub fn run_convert(sets: &[ProposalSet], gts: Option<&[LabeledBox]>, cfg: &PipelineConfig) -> Result<Vec<PseudoLabel>> {
    run_convert_with(sets, gts, cfg, cfg.selection_strategy())
}

fn run_convert_with(
    sets: &[ProposalSet],
    gts: Option<&[LabeledBox]>,
    cfg: &PipelineConfig,
    strategy: SelectionStrategy,
) -> Result<Vec<PseudoLabel>> {
    check_gt(sets, gts, strategy)?;
    let ctx = SelectionContext {
        strategy,
        conversion: &cfg.conversion,
        categories: &cfg.categories,
    };
    parallel_map(sets, cfg.workers, |i, ps| {
        let sel = select(ps, &ctx, gts.map(|g| &g[i].obb))?;
        pseudo_label(ps, &sel, &cfg.conversion)
    })
}

/// Labels under `strategy` evaluated against `gts` aligned with `sets`.
pub fn strategy_eval(
    sets: &[ProposalSet],
    gts: &[LabeledBox],
    cfg: &PipelineConfig,
    strategy: SelectionStrategy,
) -> Result<EvalReport> {
    let labels: Vec<LabeledBox> = run_convert_with(sets, Some(gts), cfg, strategy)?
        .iter()
        .map(PseudoLabel::to_labeled_box)
        .collect();
    let pairs: Vec<_> = labels.iter().zip(gts).collect();
    evaluate_pairs(&pairs, &cfg.eval_options())
}

/// SamTop, the configured fused weights and the oracle ceiling side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub sam_top: EvalReport,
    pub fused: EvalReport,
    pub oracle: EvalReport,
}

impl OracleComparison {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10}  {:>8}  {:>8}\n", "strategy", "mIoU", "mAP50");
        for (name, r) in [("sam-top", &self.sam_top), ("fused", &self.fused), ("oracle-iou", &self.oracle)] {
            out.push_str(&format!("{:<10}  {:>8.4}  {:>8.4}\n", name, r.mean_miou, r.map50));
        }
        out
    }
}

pub fn oracle_comparison(sets: &[ProposalSet], gts: &[LabeledBox], cfg: &PipelineConfig) -> Result<OracleComparison> {
    Ok(OracleComparison {
        sam_top: strategy_eval(sets, gts, cfg, SelectionStrategy::SamTop)?,
        fused: strategy_eval(sets, gts, cfg, SelectionStrategy::Fused(cfg.weights))?,
        oracle: strategy_eval(sets, gts, cfg, SelectionStrategy::OracleIoU)?,
    })
}

/// Everything a full convert → select → evaluate run writes, as bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub pseudo_labels: BTreeMap<String, String>,
    pub selections: String,
    pub report_json: String,
    pub report_table: String,
}

pub fn run_end_to_end(sets: &[ProposalSet], gts: &[LabeledBox], cfg: &PipelineConfig) -> Result<RunArtifacts> {
    let labels: Vec<LabeledBox> = run_convert(sets, Some(gts), cfg)?
        .iter()
        .map(PseudoLabel::to_labeled_box)
        .collect();
    let selections = run_select(sets, Some(gts), cfg, true)?;
    let pairs: Vec<_> = labels.iter().zip(gts).collect();
    let report = evaluate_pairs(&pairs, &cfg.eval_options())?;
    Ok(RunArtifacts {
        pseudo_labels: io::dota_files(&labels),
        selections: selections_json(&selections),
        report_json: io::report_json(&report),
        report_table: report.to_table(),
    })
}

pub fn selections_json(records: &[SelectRecord]) -> String {
    serde_json::to_string_pretty(records).expect("selection serialization") + "\n"
}
