use super::MetricsError;
use crate::geometry::{iou, Box2D};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Number of recall points of the interpolated precision-recall curve.
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
        }
    }
}

impl EvalConfig {
    pub fn new(iou_thresholds: Vec<f64>) -> Result<Self, MetricsError> {
        let cfg = Self { iou_thresholds };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let t = &self.iou_thresholds;
        if t.is_empty()
            || t.iter().any(|&v| !(v > 0.0 && v < 1.0))
            || t.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(MetricsError::InvalidThresholds(t.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: Box2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: Box2D,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub category_id: u64,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub per_category: Vec<CategoryAp>,
}

fn overlap(a: &Box2D, b: &Box2D) -> f64 {
    iou(a, b).unwrap_or(0.0)
}

/// Greedy matching at one threshold; returns the true-positive flag of each
/// detection in `dets` (already ranked).
fn match_detections(dets: &[&ScoredBox], gts: &[&GroundTruth], thr: f64) -> Vec<bool> {
    let mut used = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if used[g] || gt.image_id != d.image_id {
                    continue;
                }
                let o = overlap(&d.bbox, &gt.bbox);
                if o >= thr && best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, _)) => {
                    used[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the 101-point interpolated precision-recall curve.
fn interpolated_ap(tp: &[bool], num_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut j = 0usize;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        while j < recall.len() && recall[j] < level {
            j += 1;
        }
        if j < recall.len() {
            sum += precision[j];
        }
    }
    sum / RECALL_POINTS as f64
}

/// COCO-style AP.
///
/// Per category and threshold, detections are ranked by score (ties broken
/// by image id, then box coordinates) and each takes the unmatched same-image
/// ground truth with the highest IoU at or above the threshold. A category's
/// AP is the mean over thresholds, and the report's AP the mean over
/// categories that have ground truth. AP50 and AP75 are evaluated at those
/// thresholds regardless of the configured list.
pub fn evaluate_ap(
    detections: &[ScoredBox],
    ground_truth: &[GroundTruth],
    cfg: &EvalConfig,
) -> Result<ApReport, MetricsError> {
    cfg.validate()?;
    if ground_truth.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let mut gts_by_cat: BTreeMap<u64, Vec<&GroundTruth>> = BTreeMap::new();
    for g in ground_truth {
        gts_by_cat.entry(g.category_id).or_default().push(g);
    }
    let mut dets_by_cat: BTreeMap<u64, Vec<&ScoredBox>> = BTreeMap::new();
    for d in detections {
        dets_by_cat.entry(d.category_id).or_default().push(d);
    }

    let mut per_category = Vec::with_capacity(gts_by_cat.len());
    for (&cat, gts) in &mut gts_by_cat {
        gts.sort_by(|a, b| a.image_id.cmp(&b.image_id).then_with(|| a.bbox.lex_cmp(&b.bbox)));
        let mut dets = dets_by_cat.remove(&cat).unwrap_or_default();
        dets.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.image_id.cmp(&b.image_id))
                .then_with(|| a.bbox.lex_cmp(&b.bbox))
        });
        let at = |thr: f64| interpolated_ap(&match_detections(&dets, gts, thr), gts.len());
        let ap = cfg.iou_thresholds.iter().map(|&t| at(t)).sum::<f64>()
            / cfg.iou_thresholds.len() as f64;
        per_category.push(CategoryAp {
            category_id: cat,
            ap,
            ap50: at(0.5),
            ap75: at(0.75),
        });
    }
    let n = per_category.len() as f64;
    let mean = |f: fn(&CategoryAp) -> f64| per_category.iter().map(f).sum::<f64>() / n;
    Ok(ApReport {
        ap: mean(|c| c.ap),
        ap50: mean(|c| c.ap50),
        ap75: mean(|c| c.ap75),
        per_category,
    })
}
