//! Ranking a point's mask proposals and turning the winner into a label.

use serde::Serialize;

use crate::dataset::{CategoryTable, LabeledBox, PointAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{rotated_iou, OrientedBox};
use crate::mask::BinaryMask;
use crate::scoring::{fuse_score, FusedScore, FusionWeights, ScoreBundle};
use crate::symmetry::{obb_from_mask, BoxFit, ConversionMode};

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mask: BinaryMask,
    pub scores: ScoreBundle,
}

/// All proposals generated for one annotated point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    annotation: PointAnnotation,
    proposals: Vec<Proposal>,
}

impl ProposalSet {
    pub fn new(annotation: PointAnnotation, proposals: Vec<Proposal>) -> Result<Self> {
        let first = proposals
            .first()
            .ok_or_else(|| Error::invalid(format!(
                "point ({}, {}) in `{}` has no proposals",
                annotation.x, annotation.y, annotation.image_id
            )))?;
        if proposals.iter().any(|p| !p.mask.same_shape(&first.mask)) {
            return Err(Error::invalid("proposal masks of one point differ in size"));
        }
        Ok(ProposalSet {
            annotation,
            proposals,
        })
    }

    pub fn annotation(&self) -> &PointAnnotation {
        &self.annotation
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionStrategy {
    /// Highest proposal-generator score.
    SamTop,
    /// Highest `s_sam + α·S_bmm + β·S_cgm`.
    Fused(FusionWeights),
    /// Highest rotated IoU against ground truth; an upper bound for any
    /// score-based selector.
    OracleIoU,
}

impl SelectionStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionStrategy::SamTop => "sam-top",
            SelectionStrategy::Fused(_) => "fused",
            SelectionStrategy::OracleIoU => "oracle-iou",
        }
    }
}

/// Everything needed to score proposals besides the proposals themselves.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub strategy: SelectionStrategy,
    pub conversion: &'a ConversionMode,
    pub categories: &'a CategoryTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub index: usize,
    /// The strategy's scalar for the chosen proposal.
    pub confidence: f64,
    /// The strategy's scalar for every proposal.
    pub scores: Vec<f64>,
    /// Fused-score breakdown per proposal, under the fused strategy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fused: Option<Vec<FusedScore>>,
}

/// First index of the maximum; NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Picks the proposal with the highest strategy scalar, lowest index on ties.
/// `gt` is required by [`SelectionStrategy::OracleIoU`] and ignored otherwise.
pub fn select(ps: &ProposalSet, ctx: &SelectionContext<'_>, gt: Option<&OrientedBox>) -> Result<Selection> {
    let category = &ps.annotation.category;
    let (scores, fused) = match ctx.strategy {
        SelectionStrategy::SamTop => (ps.proposals.iter().map(|p| p.scores.s_sam).collect(), None),
        SelectionStrategy::Fused(weights) => {
            let k = ctx.categories.index_of(category)?;
            let fused = ps
                .proposals
                .iter()
                .map(|p| fuse_score(&p.scores, &weights, k))
                .collect::<Result<Vec<_>>>()?;
            (fused.iter().map(|f| f.score).collect(), Some(fused))
        }
        SelectionStrategy::OracleIoU => {
            let gt = gt.ok_or(Error::MissingGroundTruth)?;
            let ious = ps
                .proposals
                .iter()
                .map(|p| match obb_from_mask(&p.mask, ctx.conversion, category) {
                    Ok(mb) => rotated_iou(&mb.obb, gt),
                    Err(Error::EmptyMask) => Ok(f64::NEG_INFINITY),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()?;
            (ious, None)
        }
    };
    let index = argmax(&scores).ok_or_else(|| Error::invalid("no proposal has a comparable score"))?;
    Ok(Selection {
        index,
        confidence: scores[index],
        scores,
        fused,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoLabel {
    pub image_id: String,
    pub category: String,
    pub obb: OrientedBox,
    pub confidence: f64,
    pub proposal_index: usize,
    pub fit: BoxFit,
    pub isotropic_fallback: bool,
}

impl PseudoLabel {
    pub fn to_labeled_box(&self) -> LabeledBox {
        LabeledBox {
            image_id: self.image_id.clone(),
            obb: self.obb,
            category: self.category.clone(),
            difficult: false,
            confidence: Some(self.confidence),
        }
    }
}

/// Converts the chosen proposal's mask into an oriented box labeled with the
/// annotation's category.
pub fn pseudo_label(ps: &ProposalSet, selection: &Selection, conversion: &ConversionMode) -> Result<PseudoLabel> {
    let proposal = ps.proposals.get(selection.index).ok_or_else(|| {
        Error::invalid(format!(
            "proposal index {} out of range for {} proposals",
            selection.index,
            ps.proposals.len()
        ))
    })?;
    let mb = obb_from_mask(&proposal.mask, conversion, &ps.annotation.category)?;
    Ok(PseudoLabel {
        image_id: ps.annotation.image_id.clone(),
        category: ps.annotation.category.clone(),
        obb: mb.obb,
        confidence: selection.confidence,
        proposal_index: selection.index,
        fit: mb.fit,
        isotropic_fallback: mb.isotropic_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annotation() -> PointAnnotation {
        PointAnnotation {
            image_id: "img".into(),
            x: 10.0,
            y: 10.0,
            category: "plane".into(),
        }
    }

    fn rect(x0: usize, y0: usize, w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(40, 40, |c, r| c >= x0 && c < x0 + w && r >= y0 && r < y0 + h).unwrap()
    }

    fn proposal(mask: BinaryMask, s_sam: f64) -> Proposal {
        Proposal {
            mask,
            scores: ScoreBundle::sam_only(s_sam),
        }
    }

    #[test]
    fn argmax_ties_and_nan() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[f64::NAN, 0.5]), Some(1));
        assert_eq!(argmax(&[f64::NAN]), None);
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), Some(0));
    }

    #[test]
    fn strategies_pick_expected_proposal() {
        let cats = CategoryTable::dota();
        let conv = ConversionMode::MinimumOnly;
        let ps = ProposalSet::new(
            annotation(),
            vec![
                proposal(rect(5, 5, 10, 10), 0.9),
                proposal(rect(5, 5, 20, 10), 0.95),
                proposal(rect(5, 5, 20, 20), 0.8),
            ],
        )
        .unwrap();
        let ctx = |strategy| SelectionContext {
            strategy,
            conversion: &conv,
            categories: &cats,
        };

        assert_eq!(select(&ps, &ctx(SelectionStrategy::SamTop), None).unwrap().index, 1);
        let gt = OrientedBox::new(15.0, 15.0, 20.0, 20.0, 0.0).unwrap();
        let oracle = select(&ps, &ctx(SelectionStrategy::OracleIoU), Some(&gt)).unwrap();
        assert_eq!(oracle.index, 2);
        assert!((oracle.confidence - 1.0).abs() < 1e-12);
        assert!(matches!(
            select(&ps, &ctx(SelectionStrategy::OracleIoU), None),
            Err(Error::MissingGroundTruth)
        ));

        let fused = select(&ps, &ctx(SelectionStrategy::Fused(FusionWeights::default())), None).unwrap();
        assert_eq!(fused.index, 1);
        assert_eq!(fused.fused.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn single_proposal_always_wins() {
        let cats = CategoryTable::dota();
        let conv = ConversionMode::MinimumOnly;
        let ps = ProposalSet::new(annotation(), vec![proposal(rect(1, 1, 3, 3), -5.0)]).unwrap();
        let gt = OrientedBox::new(30.0, 30.0, 2.0, 2.0, 0.0).unwrap();
        for strategy in [
            SelectionStrategy::SamTop,
            SelectionStrategy::Fused(FusionWeights::default()),
            SelectionStrategy::OracleIoU,
        ] {
            let ctx = SelectionContext {
                strategy,
                conversion: &conv,
                categories: &cats,
            };
            assert_eq!(select(&ps, &ctx, Some(&gt)).unwrap().index, 0);
        }
    }

    #[test]
    fn pseudo_label_of_exact_rectangle() {
        let conv = ConversionMode::MinimumOnly;
        let ps = ProposalSet::new(annotation(), vec![proposal(rect(4, 6, 20, 10), 1.0)]).unwrap();
        let sel = Selection {
            index: 0,
            confidence: 0.42,
            scores: vec![0.42],
            fused: None,
        };
        let label = pseudo_label(&ps, &sel, &conv).unwrap();
        let gt = OrientedBox::new(14.0, 11.0, 20.0, 10.0, 0.0).unwrap();
        assert!(rotated_iou(&label.obb, &gt).unwrap() >= 0.99);
        assert_eq!(label.confidence, 0.42);
        assert_eq!(label.category, "plane");

        let empty = ProposalSet::new(annotation(), vec![proposal(BinaryMask::empty(40, 40).unwrap(), 1.0)]).unwrap();
        assert!(matches!(pseudo_label(&empty, &sel, &conv), Err(Error::EmptyMask)));
    }

    #[test]
    fn proposal_set_validation() {
        assert!(ProposalSet::new(annotation(), vec![]).is_err());
        let other = BinaryMask::from_fn(10, 10, |_, _| true).unwrap();
        assert!(ProposalSet::new(annotation(), vec![proposal(rect(1, 1, 2, 2), 0.0), proposal(other, 0.0)]).is_err());
    }
}
